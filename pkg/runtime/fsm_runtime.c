#include "fsm_runtime.h"

#include <inttypes.h>
#include <math.h>
#include <stdlib.h>
#include <string.h>

/* -- storage ---------------------------------------------------------------
 * One malloc at creation; everything else bumps `offset` in 8-byte steps.
 */

fsm_storage *fsm_storage_new(int64_t capacity) {
    fsm_storage *s = malloc(sizeof(fsm_storage));
    if (!s) abort();
    s->capacity = capacity;
    s->offset = 0;
    s->base = malloc((size_t)capacity);
    if (!s->base) {
        fprintf(stderr, "fsm_storage_new: cannot reserve %" PRId64 " bytes\n",
                capacity);
        abort();
    }
    return s;
}

void fsm_storage_free(fsm_storage *s) {
    free(s->base);
    free(s);
}

void *fsm_alloc(fsm_storage *s, int64_t bytes) {
    int64_t aligned = (bytes + 7) & ~(int64_t)7;
    if (s->offset + aligned > s->capacity) {
        fprintf(stderr,
                "fsm_alloc: storage exhausted (requested %" PRId64
                ", remaining %" PRId64 ")\n",
                aligned, s->capacity - s->offset);
        abort();
    }
    void *out = s->base + s->offset;
    s->offset += aligned;
    return out;
}

int64_t fsm_tell(const fsm_storage *s) { return s->offset; }

void fsm_reset(fsm_storage *s, int64_t offset) { s->offset = offset; }

/* -- constructors ----------------------------------------------------------- */

fsm_vector *fsm_vector_new(fsm_storage *s, int64_t n) {
    fsm_vector *v = fsm_alloc(s, sizeof(fsm_vector));
    v->length = n;
    v->elems = fsm_alloc(s, n * (int64_t)sizeof(double));
    return v;
}

fsm_matrix *fsm_matrix_new(fsm_storage *s, int64_t rows, int64_t cols) {
    fsm_matrix *m = fsm_alloc(s, sizeof(fsm_matrix));
    m->rows = rows;
    m->cols = cols;
    m->elems = fsm_alloc(s, rows * (int64_t)sizeof(double *));
    double *payload = fsm_alloc(s, rows * cols * (int64_t)sizeof(double));
    for (int64_t r = 0; r < rows; r++) m->elems[r] = payload + r * cols;
    return m;
}

fsm_dvector *fsm_dvector_new(fsm_storage *s, int64_t n) {
    fsm_dvector *v = fsm_alloc(s, sizeof(fsm_dvector));
    v->length = n;
    v->elems = fsm_alloc(s, n * (int64_t)sizeof(fsm_pair));
    return v;
}

fsm_dmatrix *fsm_dmatrix_new(fsm_storage *s, int64_t rows, int64_t cols) {
    fsm_dmatrix *m = fsm_alloc(s, sizeof(fsm_dmatrix));
    m->rows = rows;
    m->cols = cols;
    m->elems = fsm_alloc(s, rows * (int64_t)sizeof(fsm_pair *));
    fsm_pair *payload = fsm_alloc(s, rows * cols * (int64_t)sizeof(fsm_pair));
    for (int64_t r = 0; r < rows; r++) m->elems[r] = payload + r * cols;
    return m;
}

int64_t fsm_vector_bytes(int64_t n) {
    return (int64_t)sizeof(fsm_vector) + 8 + n * 8 + 8;
}

int64_t fsm_matrix_bytes(int64_t rows, int64_t cols) {
    return (int64_t)sizeof(fsm_matrix) + 8 + rows * 8 + rows * cols * 8 + 16;
}

int64_t fsm_dvector_bytes(int64_t n) {
    return (int64_t)sizeof(fsm_dvector) + 8 + n * 16 + 8;
}

int64_t fsm_dmatrix_bytes(int64_t rows, int64_t cols) {
    return (int64_t)sizeof(fsm_dmatrix) + 8 + rows * 8 + rows * cols * 16 + 16;
}

/* -- checked access --------------------------------------------------------- */

static void fsm_undefined(const char *what, int64_t i, int64_t n) {
    printf("\xe2\x8a\xa5(index %" PRId64 " out of bounds [0, %" PRId64 "))\n",
           i, n);
    (void)what;
    exit(0);
}

double fsm_vget(const fsm_vector *v, int64_t i) {
    if (i < 0 || i >= v->length) fsm_undefined("vector", i, v->length);
    return v->elems[i];
}

fsm_pair fsm_dvget(const fsm_dvector *v, int64_t i) {
    if (i < 0 || i >= v->length) fsm_undefined("dvector", i, v->length);
    return v->elems[i];
}

double fsm_mget(const fsm_matrix *m, int64_t r, int64_t c) {
    if (r < 0 || r >= m->rows) fsm_undefined("matrix row", r, m->rows);
    if (c < 0 || c >= m->cols) fsm_undefined("matrix col", c, m->cols);
    return m->elems[r][c];
}

fsm_pair fsm_dmget(const fsm_dmatrix *m, int64_t r, int64_t c) {
    if (r < 0 || r >= m->rows) fsm_undefined("dmatrix row", r, m->rows);
    if (c < 0 || c >= m->cols) fsm_undefined("dmatrix col", c, m->cols);
    return m->elems[r][c];
}

fsm_vector *fsm_mrow(fsm_storage *s, const fsm_matrix *m, int64_t r) {
    if (r < 0 || r >= m->rows) fsm_undefined("matrix row", r, m->rows);
    fsm_vector *v = fsm_alloc(s, sizeof(fsm_vector));
    v->length = m->cols;
    v->elems = m->elems[r];
    return v;
}

fsm_dvector *fsm_dmrow(fsm_storage *s, const fsm_dmatrix *m, int64_t r) {
    if (r < 0 || r >= m->rows) fsm_undefined("dmatrix row", r, m->rows);
    fsm_dvector *v = fsm_alloc(s, sizeof(fsm_dvector));
    v->length = m->cols;
    v->elems = m->elems[r];
    return v;
}

int64_t fsm_ipow(int64_t base, int64_t exp) {
    int64_t out = 1;
    for (int64_t i = 0; i < exp; i++) out *= base;
    return out;
}

/* -- wire format ------------------------------------------------------------- */

static int read_tag(FILE *in, char *tag) {
    int c;
    do {
        c = fgetc(in);
        if (c == EOF) return 1;
    } while (c == ' ' || c == '\n' || c == '\r' || c == '\t');
    *tag = (char)c;
    return 0;
}

int fsm_read_arity(FILE *in, int64_t *out) {
    return fscanf(in, "%" SCNd64, out) != 1;
}

int fsm_read_double(fsm_storage *s, FILE *in, double *out) {
    char tag;
    (void)s;
    if (read_tag(in, &tag) || tag != 'D') return 1;
    return fscanf(in, "%la", out) != 1 && fscanf(in, "%lf", out) != 1;
}

int fsm_read_index(fsm_storage *s, FILE *in, int64_t *out) {
    char tag;
    (void)s;
    if (read_tag(in, &tag) || tag != 'I') return 1;
    return fscanf(in, "%" SCNd64, out) != 1;
}

int fsm_read_bool(fsm_storage *s, FILE *in, bool *out) {
    char tag;
    int v;
    (void)s;
    if (read_tag(in, &tag) || tag != 'B') return 1;
    if (fscanf(in, "%d", &v) != 1) return 1;
    *out = v != 0;
    return 0;
}

static int read_doubles(FILE *in, double *dst, int64_t n) {
    for (int64_t i = 0; i < n; i++) {
        if (fscanf(in, "%la", &dst[i]) != 1) return 1;
    }
    return 0;
}

int fsm_read_vector(fsm_storage *s, FILE *in, fsm_vector **out) {
    char tag;
    int64_t n;
    if (read_tag(in, &tag) || tag != 'V') return 1;
    if (fscanf(in, "%" SCNd64, &n) != 1 || n < 0) return 1;
    fsm_vector *v = fsm_vector_new(s, n);
    if (read_doubles(in, v->elems, n)) return 1;
    *out = v;
    return 0;
}

int fsm_read_matrix(fsm_storage *s, FILE *in, fsm_matrix **out) {
    char tag;
    int64_t rows, cols;
    if (read_tag(in, &tag) || tag != 'M') return 1;
    if (fscanf(in, "%" SCNd64 " %" SCNd64, &rows, &cols) != 2) return 1;
    if (rows < 0 || cols < 0) return 1;
    fsm_matrix *m = fsm_matrix_new(s, rows, cols);
    for (int64_t r = 0; r < rows; r++) {
        if (read_doubles(in, m->elems[r], cols)) return 1;
    }
    *out = m;
    return 0;
}

/* -- printing ----------------------------------------------------------------
 * Matches the evaluator's printer: 17 significant digits, bracketed arrays.
 */

void fsm_print_double(double v) { printf("%.17g", v); }

void fsm_print_index(int64_t v) { printf("%" PRId64, v); }

void fsm_print_bool(bool v) { printf(v ? "true" : "false"); }

void fsm_print_vector(const fsm_vector *v) {
    printf("[");
    for (int64_t i = 0; i < v->length; i++) {
        if (i) printf(", ");
        fsm_print_double(v->elems[i]);
    }
    printf("]");
}

void fsm_print_matrix(const fsm_matrix *m) {
    printf("[");
    for (int64_t r = 0; r < m->rows; r++) {
        if (r) printf(", ");
        printf("[");
        for (int64_t c = 0; c < m->cols; c++) {
            if (c) printf(", ");
            fsm_print_double(m->elems[r][c]);
        }
        printf("]");
    }
    printf("]");
}

static void print_pair(fsm_pair p) {
    printf("(");
    fsm_print_double(p.fst);
    printf(", ");
    fsm_print_double(p.snd);
    printf(")");
}

void fsm_print_dvector(const fsm_dvector *v) {
    printf("[");
    for (int64_t i = 0; i < v->length; i++) {
        if (i) printf(", ");
        print_pair(v->elems[i]);
    }
    printf("]");
}

void fsm_print_dmatrix(const fsm_dmatrix *m) {
    printf("[");
    for (int64_t r = 0; r < m->rows; r++) {
        if (r) printf(", ");
        printf("[");
        for (int64_t c = 0; c < m->cols; c++) {
            if (c) printf(", ");
            print_pair(m->elems[r][c]);
        }
        printf("]");
    }
    printf("]");
}

void fsm_print_dsplit(fsm_dsplit v) {
    printf("[");
    for (int64_t i = 0; i < v.val->length; i++) {
        if (i) printf(", ");
        fsm_pair p = {v.val->elems[i], v.tan->elems[i]};
        print_pair(p);
    }
    printf("]");
}
