#include <math.h>
#include <stdio.h>
#include "fss.h"

static const char *CONFIG =
    "{\"grid\": {\"lo\": [0.0], \"hi\": [1.0], \"h\": 0.125, \"collar_width\": 0.5},"
    " \"params\": {\"s\": 0.5, \"p\": 2.0},"
    " \"weight\": {\"kind\": \"constant\", \"value\": 1.0, \"r\": 4.0},"
    " \"problem\": {\"alpha\": 0.5}}";

int main(void) {
    FssProblem *pb = NULL;
    if (fss_problem_from_json(CONFIG, &pb) != FSS_STATUS_OK) {
        fprintf(stderr, "%s\n", fss_last_error());
        return 1;
    }
    size_t n = fss_problem_num_nodes(pb);
    FssSolution *sol = NULL;
    if (fss_solve(pb, 0.5, &sol) != FSS_STATUS_OK) {
        fprintf(stderr, "%s\n", fss_last_error());
        return 1;
    }
    double u[64];
    double lambda = 0.0;
    if (fss_solution_len(sol) != n || fss_solution_values(sol, u, 64) != FSS_STATUS_OK
        || fss_solution_constant(sol, &lambda) != FSS_STATUS_OK) {
        return 1;
    }
    if (fss_solution_values(sol, u, 1) != FSS_STATUS_BUFFER_TOO_SMALL) {
        return 1;
    }
    printf("%zu %.17g %.17g\n", n, u[n / 2], lambda);
    fss_solution_free(sol);
    fss_problem_free(pb);
    return lambda > 0.0 && isfinite(lambda) ? 0 : 1;
}
