#include <math.h>
#include <stdio.h>
#include "fairsel.h"

int main(void) {
    FairselDataset *ds = NULL;
    if (fairsel_dataset_synthetic(60, 3, 3, 2, 3.0, 0.9, 1, true, &ds) != FAIRSEL_STATUS_OK) {
        fprintf(stderr, "%s\n", fairsel_last_error());
        return 1;
    }
    FairselConfig *cfg = fairsel_config_new(3);
    FairselResult *res = NULL;
    if (fairsel_select(ds, cfg, &res) != FAIRSEL_STATUS_OK) {
        fprintf(stderr, "%s\n", fairsel_last_error());
        return 1;
    }
    size_t sel[3];
    fairsel_result_selected(res, sel, 3);
    FairselMetrics m;
    if (fairsel_evaluate(ds, sel, 3, 0, 3, 0, true, &m) != FAIRSEL_STATUS_OK || isnan(m.acc)) {
        return 1;
    }
    printf("%zu %zu %zu\n", sel[0], sel[1], sel[2]);

    fairsel_config_set_k(cfg, 100);
    FairselResult *bad = NULL;
    int status = fairsel_select(ds, cfg, &bad);

    fairsel_result_free(res);
    fairsel_config_free(cfg);
    fairsel_dataset_free(ds);
    return status == FAIRSEL_STATUS_CONFIG_ERROR ? 0 : 1;
}
