#include <math.h>
#include <stdio.h>
#include "benign_lab.h"

#define CHECK(cond)                                              \
    do {                                                         \
        if (!(cond)) {                                           \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(void) {
    CHECK(fabs(bl_kappa(1.0) - 0.5) < 1e-15);

    double ev[3];
    uint64_t mu[3];
    CHECK(bl_spectrum(3, 2, 1e-12, ev, mu) == BL_STATUS_OK);
    CHECK(mu[1] == 3 && fabs(ev[1] - 1.0 / 12.0) < 1e-12);

    double x[8] = {1, 0, 0, 1, -1, 0, 0, -1};
    double y[4] = {1, 0, -1, 0};
    BlKrrModel *model = NULL;
    CHECK(bl_krr_fit(x, 4, 2, y, 1e-10, &model) == BL_STATUS_OK);
    double pred[4];
    CHECK(bl_krr_predict(model, x, 4, 2, pred) == BL_STATUS_OK);
    for (int i = 0; i < 4; i++) CHECK(fabs(pred[i] - y[i]) < 1e-6);
    bl_krr_free(model);

    BlNet *net = NULL;
    CHECK(bl_net_init(3, 2, 0, &net) == BL_STATUS_INVALID_ARGUMENT);
    CHECK(net == NULL && bl_last_error_message() != NULL);
    CHECK(bl_net_init(8, 2, 0, &net) == BL_STATUS_OK);
    CHECK(bl_net_step(net, x, y, 4, 2, 0.1) == BL_STATUS_OK);
    CHECK(bl_net_width(net) == 8);
    bl_net_free(net);

    puts("ok");
    return 0;
}
