#include <math.h>
#include <stdio.h>

#include "edgecache.h"

int main(void) {
    EcNetworkParams params = ec_network_params_default();
    EcPlacement *model = NULL;
    if (ec_placement_new(&params, 3, &model) != EC_STATUS_OK) {
        return 1;
    }
    const double p[3] = {0.5, 0.3, 0.2};
    double q[3];
    double asp = 0.0;
    EcStatus status = ec_placement_solve(model, p, 3, q, &asp);
    ec_placement_free(model);
    if (status != EC_STATUS_OK) {
        fprintf(stderr, "%s\n", ec_status_message(status));
        return 2;
    }
    if (fabs(q[0] + q[1] + q[2] - 2.0) > 1e-9 || !(asp > 0.0 && asp <= 1.0)) {
        return 3;
    }
    printf("q sums to 2\n");
    return 0;
}
