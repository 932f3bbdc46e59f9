#include "fsm_runtime.h"

int64_t uMv_d_storage_bytes(fsm_vector* u, fsm_matrix* M, fsm_vector* v) {
  return fsm_matrix_bytes(M->rows, M->cols);
}

fsm_matrix* uMv_d(fsm_storage* s_, fsm_vector* u, fsm_matrix* M, fsm_vector* v) {
  fsm_matrix* res = fsm_matrix_new(s_, M->rows, M->cols);
  for (int64_t r = 0; r < M->rows; r++) {
    for (int64_t c = 0; c < M->cols; c++) {
      res->elems[r][c] = u->elems[r] * v->elems[c];
    }
  }
  return res;
}
