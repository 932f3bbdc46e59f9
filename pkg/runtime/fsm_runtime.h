/* Runtime for C emitted from .fsm programs.
 *
 * Values are vectors/matrices of doubles (and their dual variants carrying
 * value/tangent pairs) allocated from a bump arena: allocation is a pointer
 * increment, release is a watermark reset, and nothing in emitted code ever
 * calls malloc or free.  Matrices keep a row-pointer table over a
 * contiguous payload, so emitted code indexes `m->elems[r][c]`.
 *
 * Checked accessors report the undefined marker in the interpreter's
 * syntax and exit, so out-of-domain runs compare cleanly against the
 * reference evaluator.
 */
#ifndef FSM_RUNTIME_H
#define FSM_RUNTIME_H

#include <stdbool.h>
#include <stdint.h>
#include <stdio.h>

typedef struct {
    int64_t capacity;
    int64_t offset;
    unsigned char *base;
} fsm_storage;

typedef struct {
    int64_t length;
    double *elems;
} fsm_vector;

typedef struct {
    int64_t rows;
    int64_t cols;
    double **elems;
} fsm_matrix;

typedef struct {
    double fst;
    double snd;
} fsm_pair;

typedef struct {
    int64_t length;
    fsm_pair *elems;
} fsm_dvector;

typedef struct {
    int64_t rows;
    int64_t cols;
    fsm_pair **elems;
} fsm_dmatrix;

/* split layout: separate value and tangent arrays */
typedef struct {
    fsm_vector *val;
    fsm_vector *tan;
} fsm_dsplit;

/* -- storage ------------------------------------------------------------- */

fsm_storage *fsm_storage_new(int64_t capacity);
void fsm_storage_free(fsm_storage *s);
void *fsm_alloc(fsm_storage *s, int64_t bytes);
int64_t fsm_tell(const fsm_storage *s);
void fsm_reset(fsm_storage *s, int64_t offset);

/* -- constructors and sizes ----------------------------------------------- */

fsm_vector *fsm_vector_new(fsm_storage *s, int64_t n);
fsm_matrix *fsm_matrix_new(fsm_storage *s, int64_t rows, int64_t cols);
fsm_dvector *fsm_dvector_new(fsm_storage *s, int64_t n);
fsm_dmatrix *fsm_dmatrix_new(fsm_storage *s, int64_t rows, int64_t cols);

int64_t fsm_vector_bytes(int64_t n);
int64_t fsm_matrix_bytes(int64_t rows, int64_t cols);
int64_t fsm_dvector_bytes(int64_t n);
int64_t fsm_dmatrix_bytes(int64_t rows, int64_t cols);

/* -- checked access (reports the undefined marker and exits) -------------- */

double fsm_vget(const fsm_vector *v, int64_t i);
fsm_pair fsm_dvget(const fsm_dvector *v, int64_t i);
double fsm_mget(const fsm_matrix *m, int64_t r, int64_t c);
fsm_pair fsm_dmget(const fsm_dmatrix *m, int64_t r, int64_t c);
fsm_vector *fsm_mrow(fsm_storage *s, const fsm_matrix *m, int64_t r);
fsm_dvector *fsm_dmrow(fsm_storage *s, const fsm_dmatrix *m, int64_t r);

int64_t fsm_ipow(int64_t base, int64_t exp);

/* -- wire format (one argument per line after an arity line) --------------
 *   D <hex double> | I <int> | B <0|1> | V n x1..xn | M r c row-major
 * readers return nonzero on malformed input. */

int fsm_read_arity(FILE *in, int64_t *out);
int fsm_read_double(fsm_storage *s, FILE *in, double *out);
int fsm_read_index(fsm_storage *s, FILE *in, int64_t *out);
int fsm_read_bool(fsm_storage *s, FILE *in, bool *out);
int fsm_read_vector(fsm_storage *s, FILE *in, fsm_vector **out);
int fsm_read_matrix(fsm_storage *s, FILE *in, fsm_matrix **out);

/* -- printing in the evaluator's value syntax ------------------------------ */

void fsm_print_double(double v);
void fsm_print_index(int64_t v);
void fsm_print_bool(bool v);
void fsm_print_vector(const fsm_vector *v);
void fsm_print_matrix(const fsm_matrix *m);
void fsm_print_dvector(const fsm_dvector *v);
void fsm_print_dmatrix(const fsm_dmatrix *m);
void fsm_print_dsplit(fsm_dsplit v);

#endif /* FSM_RUNTIME_H */
