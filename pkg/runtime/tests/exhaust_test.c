/* Exhaustion diagnostic check: allocating past capacity must abort after
 * printing the requested/remaining sizes.  Run by the differential driver,
 * which expects a nonzero exit and the diagnostic on stderr. */
#include "../fsm_runtime.h"

int main(void) {
    fsm_storage *s = fsm_storage_new(64);
    fsm_alloc(s, 32);
    fsm_alloc(s, 1024); /* aborts */
    return 0;
}
