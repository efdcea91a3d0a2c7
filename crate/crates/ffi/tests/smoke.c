#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "oddm.h"

static int fail(const char *what, int rc) {
    const char *msg = oddm_last_error();
    fprintf(stderr, "%s: status %d: %s\n", what, rc, msg ? msg : "(none)");
    return 1;
}

int main(void) {
    OddmConfig *cfg = NULL;
    int rc = oddm_config_new(16, 8, 15e3, 2, 0.1, 4, 2, 4, 1, &cfg);
    if (rc != ODDM_OK) return fail("config", rc);

    size_t mn = 0;
    oddm_config_frame_len(cfg, &mn);
    double *x = malloc(2 * mn * sizeof(double));
    double *y = malloc(2 * mn * sizeof(double));
    for (size_t i = 0; i < mn; i++) oddm_qam4_point((unsigned)(i * 7 % 4), x + 2 * i);

    OddmModem *modem = NULL;
    rc = oddm_modem_new(cfg, ODDM_SCHEME_ODDM, &modem);
    if (rc != ODDM_OK) return fail("modem", rc);

    size_t len = 0;
    double rate = 0, t0 = 0;
    rc = oddm_modulate(modem, x, 2 * mn, NULL, 0, &len, &rate, &t0);
    if (rc != ODDM_ERR_BUFFER) return fail("size query", rc);
    double *w = malloc(2 * len * sizeof(double));
    rc = oddm_modulate(modem, x, 2 * mn, w, len, &len, &rate, &t0);
    if (rc != ODDM_OK) return fail("modulate", rc);
    rc = oddm_demodulate(modem, w, len, rate, t0, y, 2 * mn);
    if (rc != ODDM_OK) return fail("demodulate", rc);

    double err = 0;
    for (size_t i = 0; i < 2 * mn; i++) err = fmax(err, fabs(x[i] - y[i]));
    if (err > 1e-9) {
        fprintf(stderr, "round trip error %g\n", err);
        return 1;
    }

    rc = oddm_demodulate(modem, w, 3, rate, t0, y, 2 * mn);
    if (rc == ODDM_OK || oddm_last_error() == NULL) return fail("short waveform accepted", rc);

    printf("round trip ok (%zu samples, max error %.1e)\n", len, err);
    free(w);
    free(x);
    free(y);
    oddm_modem_free(modem);
    oddm_config_free(cfg);
    return 0;
}
