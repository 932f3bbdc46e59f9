"""Diagnostics shared by parser, checker, and the rest of the toolchain."""


class FsmError(Exception):
    """User-facing diagnostic; rendered as `file:line:col: error: msg`."""

    def __init__(self, msg, pos=None, filename="<input>", code=None):
        self.msg = msg
        self.pos = pos
        self.filename = filename
        self.code = code
        super().__init__(self.render())

    def render(self):
        line, col = self.pos if self.pos else (0, 0)
        tag = f"{self.code}: " if self.code else ""
        return f"{self.filename}:{line}:{col}: error: {tag}{self.msg}"


class ParseError(FsmError):
    pass


class TypecheckError(FsmError):
    pass


class InternalError(Exception):
    """Invariant violation inside the compiler; exit code 3 at the CLI."""


def run_deep(fn, *args, stack_mb: int = 512, **kwargs):
    """Run `fn` on a worker thread with a large stack.

    Rewriting and ANF conversion recurse to the depth of the term; the
    default thread stack is too small for the let chains long benchmark
    programs produce."""
    import threading

    box = {}

    def target():
        try:
            box["value"] = fn(*args, **kwargs)
        except BaseException as ex:  # re-raised on the caller thread
            box["error"] = ex

    old = threading.stack_size(stack_mb << 20)
    try:
        t = threading.Thread(target=target, name="fsmc-deep")
        t.start()
        t.join()
    finally:
        threading.stack_size(old)
    if "error" in box:
        raise box["error"]
    return box["value"]
