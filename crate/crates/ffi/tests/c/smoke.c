#include <math.h>
#include <stdio.h>
#include "nmlz.h"

int main(void) {
    double slopes[2] = {-0.5, 0.5};
    double statics[2] = {0.0, 0.0};
    double re[4] = {0.0, 0.3, -0.3, 0.0};
    double im[4] = {0.0, 0.0, 0.0, 0.0};
    NmlzModelHandle *model = NULL;
    NmlzTableHandle *table = NULL;
    double log11, l11, l21;

    if (nmlz_model_new(2, slopes, statics, re, im, false, &model) != NMLZ_STATUS_OK) return 1;
    if (nmlz_solve(model, 0.0, 0.0, 0.0, &table) != NMLZ_STATUS_OK) return 2;
    if (nmlz_table_log_p_tilde(table, 0, 0, &log11) != NMLZ_STATUS_OK) return 3;
    nmlz_two_level_log(0.3, 0.0, 1.0, false, &l11, &l21);
    if (fabs(log11 - l11) > 1e-3) return 4;
    if (nmlz_table_log_p_tilde(table, 5, 0, &log11) != NMLZ_STATUS_CONFIG) return 5;
    if (nmlz_last_error() == NULL) return 6;
    nmlz_table_free(table);
    nmlz_model_free(model);
    printf("ok %s\n", nmlz_version());
    return 0;
}
