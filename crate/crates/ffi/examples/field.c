#include <stdio.h>
#include "geomag_nav.h"

int main(void) {
    GnWorld *world = NULL;
    if (gn_world_from_config_json("{}", NULL, &world) != GN_STATUS_OK) {
        fprintf(stderr, "%s\n", gn_last_error_message());
        return 1;
    }
    GnFieldSample s;
    if (gn_field_at(world, 22.6, 132.9, &s) == GN_STATUS_OK)
        printf("F %.1f nT  D %.4f  I %.4f\n", s.f_nt, s.decl_deg, s.incl_deg);

    GnMissionResult *r = NULL;
    if (gn_run_mission(world, NULL, &r) == GN_STATUS_OK) {
        GnOutcome o;
        gn_result_outcome(r, &o);
        printf("outcome %d after %zu steps\n", (int)o, gn_result_steps(r));
        gn_result_free(r);
    }
    gn_world_free(world);
    printf("geomag-nav %s\n", gn_version());
    return 0;
}
