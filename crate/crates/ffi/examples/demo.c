/* Build: cargo build -p mobcast-ffi --release
 *        cc examples/demo.c -Iinclude -L../../target/release -lmobcast_ffi -o demo
 */
#include <stdio.h>
#include "mobcast.h"

static int check(MobcastStatus s, const char *what) {
    if (s != MOBCAST_STATUS_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, mobcast_last_error());
        return 1;
    }
    return 0;
}

int main(void) {
    MobcastSynthParams sp = mobcast_synth_default_params();
    sp.n_counties = 20;
    sp.n_days = 120;
    MobcastPanel *cases = NULL, *mob = NULL;
    if (check(mobcast_synth_generate(&sp, &cases, &mob), "synth")) return 1;

    MobcastBacktestParams bp = mobcast_backtest_default_params();
    MobcastRecords *records = NULL;
    if (check(mobcast_backtest_run(cases, mob, &bp, &records), "backtest")) return 1;

    MobcastCiSeries *ci = NULL;
    if (check(mobcast_ci_compute(records, &ci), "ci")) return 1;
    for (size_t i = 0; i < mobcast_ci_len(ci); i += 25) {
        MobcastCiPoint p;
        mobcast_ci_get(ci, i, &p);
        printf("%d l=%u ci=%+.4f n=%zu\n", p.date, p.lookahead, p.ci, p.n_counties);
    }
    mobcast_ci_free(ci);
    mobcast_records_free(records);
    mobcast_panel_free(cases);
    mobcast_panel_free(mob);
    return 0;
}
