"""The vector/matrix library, shipped as source in the language itself.

Definitions are ordered so each one typechecks in the environment of its
predecessors.  `vectorNorm` returns the *squared* norm: the bundle-adjustment
sources take `sqrt` of it explicitly, and the distortion code uses it as
r^2 directly.  `vectorSub`, `vectorCross`, `vectorZeros`, and `matrixZip`
round out the set needed by the differentiation machinery and the
benchmark programs.
"""

import os

from .errors import FsmError
from .parser import parse_program
from .typecheck import check_defs

PRELUDE_SOURCE = """\
// Vector and matrix library.
let vectorRange = fun n -> build n (fun i -> i)
let vectorFill = fun n e -> build n (fun i -> e)
let vectorHot = fun n i -> build n (fun j -> if i == j then 1 else 0)
let vectorMap = fun v f -> build (length v) (fun i -> f v.[i])
let vectorMap2 = fun v1 v2 f -> build (length v1) (fun i -> f v1.[i] v2.[i])
let vectorZip = fun v1 v2 -> vectorMap2 v1 v2 pair
let vectorAdd = fun v1 v2 -> vectorMap2 v1 v2 (+)
let vectorEMul = fun v1 v2 -> vectorMap2 v1 v2 (*)
let vectorSMul = fun v s -> vectorMap v (fun a -> a * s)
let vectorSub = fun v1 v2 -> vectorMap2 v1 v2 (-)
let vectorSum = fun v -> ifold (fun s i -> s + v.[i]) 0 (length v)
let vectorDot = fun v1 v2 -> vectorSum (vectorEMul v1 v2)
let vectorNorm = fun v -> vectorDot v v
let vectorSlice = fun v s e -> build (e - s + 1) (fun i -> v.[i + s])
let vectorToMatrix = fun v -> build 1 (fun i -> v)
let vectorZeros = fun n -> vectorFill n 0.0
let vectorCross = fun v1 v2 ->
  [v1.[1] * v2.[2] - v1.[2] * v2.[1],
   v1.[2] * v2.[0] - v1.[0] * v2.[2],
   v1.[0] * v2.[1] - v1.[1] * v2.[0]]
let matrixRows = fun m -> length m
let matrixCols = fun m -> length (m.[0])
let matrixZeros = fun r c -> build r (fun i -> vectorFill c 0)
let matrixOnes = fun r c -> build r (fun i -> vectorFill c 1)
let matrixEye = fun n -> build n (fun i -> vectorHot n i)
let matrixHot = fun n m r c ->
  build n (fun i ->
    build m (fun j ->
      if i == r && j == c then 1 else 0))
let matrixMap = fun m f -> build (length m) (fun i -> f m.[i])
let matrixMap2 = fun m1 m2 f -> build (length m1) (fun i -> f m1.[i] m2.[i])
let matrixAdd = fun m1 m2 -> matrixMap2 m1 m2 vectorAdd
let matrixZip = fun m1 m2 -> matrixMap2 m1 m2 vectorZip
let matrixTranspose = fun m ->
  build (matrixCols m) (fun i ->
    build (matrixRows m) (fun j ->
      m.[j].[i]))
let matrixMul = fun m1 m2 ->
  let m2T = matrixTranspose m2 in
  build (matrixRows m1) (fun i ->
    build (matrixCols m2) (fun j ->
      vectorDot (m1.[i]) (m2T.[j])))
let matrixTrace = fun m -> ifold (fun s i -> s + m.[i].[i]) 0 (length m)
"""

PRELUDE_NAMES = (
    "vectorRange", "vectorFill", "vectorHot", "vectorMap", "vectorMap2",
    "vectorZip", "vectorAdd", "vectorEMul", "vectorSMul", "vectorSum",
    "vectorDot", "vectorNorm", "vectorSlice", "vectorToMatrix",
    "vectorOutProd", "vectorSub", "vectorCross", "vectorZeros",
    "matrixRows", "matrixCols", "matrixZeros", "matrixOnes", "matrixEye",
    "matrixHot", "matrixMap", "matrixMap2", "matrixAdd", "matrixZip",
    "matrixTranspose", "matrixMul", "matrixTrace",
)

# vectorOutProd needs the matrix operations, so it comes after them.
PRELUDE_SOURCE += """\
let vectorOutProd = fun v1 v2 ->
  let m1 = vectorToMatrix v1 in
  let m2 = vectorToMatrix v2 in
  let m1T = matrixTranspose m1 in
  matrixMul m1T m2
"""


class UnknownPreludeName(FsmError):
    pass


class Prelude:
    """Ordered library definitions plus a lookup index."""

    def __init__(self, defs, elaborated):
        self.defs = defs                  # [(name, raw Expr)]
        self.elaborated = elaborated      # [(name, elaborated Expr)]
        self.by_name = dict(elaborated)
        self.names = frozenset(n for n, _ in defs)

    def lookup(self, name):
        try:
            return self.by_name[name]
        except KeyError:
            raise UnknownPreludeName(f"unknown library definition {name!r}",
                                     code="UnknownPreludeName")


_cached = None


def load_prelude(path: str = None) -> Prelude:
    """Parse and typecheck the library; definitions must check cleanly.

    `path` (or the FSM_PRELUDE environment variable) may point at an
    alternative `.fsm` file of top-level definitions.
    """
    global _cached
    path = path or os.environ.get("FSM_PRELUDE")
    if path is None and _cached is not None:
        return _cached
    if path:
        with open(path) as fh:
            src = fh.read()
        filename = path
    else:
        src = PRELUDE_SOURCE
        filename = "<prelude>"
    defs, body = parse_program(src, filename)
    if body is not None:
        raise FsmError("library file must contain only definitions",
                       filename=filename)
    elaborated, _, _ = check_defs(defs, None, {}, filename)
    pre = Prelude(defs, elaborated)
    if set(pre.names) != set(PRELUDE_NAMES) and not path:
        raise FsmError("embedded library name set drifted")
    if path is None:
        _cached = pre
    return pre
