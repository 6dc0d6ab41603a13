#include <stdio.h>
#include <stdlib.h>
#include "hsolve.h"

int main(void) {
    HsMatrix *a = NULL;
    HsFactor *f = NULL;
    char msg[256];
    if (hs_matrix_generate(HS_PROBLEM_POISSON, 12, 0, 1.0, &a) != HS_STATUS_OK) {
        hs_last_error(msg, sizeof msg);
        fprintf(stderr, "generate: %s\n", msg);
        return 1;
    }
    HsFactorOptions opts = hs_factor_options_default();
    opts.cluster_size = 32;
    if (hs_factor_new(a, &opts, &f) != HS_STATUS_OK) {
        hs_last_error(msg, sizeof msg);
        fprintf(stderr, "factor: %s\n", msg);
        return 1;
    }
    size_t n = hs_matrix_rows(a);
    double *b = malloc(n * sizeof *b);
    double *x = malloc(n * sizeof *x);
    for (size_t i = 0; i < n; i++) b[i] = 1.0;
    size_t its = 0;
    double res = 0.0;
    HsStatus s = hs_solve(a, f, HS_METHOD_AUTO, 1e-10, 200, 50, b, x, n, &its, &res);
    printf("hsolve %s: status %d, %zu iterations, residual %.3e\n", hs_version(), (int)s, its, res);
    free(b);
    free(x);
    hs_factor_free(f);
    hs_matrix_free(a);
    return s == HS_STATUS_OK ? 0 : 1;
}
