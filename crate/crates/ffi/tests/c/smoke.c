#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "proxykit.h"

static int fail(const char *what, PkStatus s) {
    char msg[256];
    pk_last_error_message(msg, sizeof msg);
    fprintf(stderr, "%s: status %d: %s\n", what, (int)s, msg);
    return 1;
}

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    PkLayout *layout = NULL;
    PkStatus s = pk_layout_load(argv[1], &layout);
    if (s != PK_STATUS_OK) return fail("load", s);
    PkScene *scene = NULL;
    s = pk_scene_new(layout, &scene);
    if (s != PK_STATUS_OK) return fail("scene", s);

    double pos[3] = {3.0, 2.5, 1.5};
    double quat[4] = {1.0, 0.0, 0.0, 0.0};
    double depth[16 * 16];
    uint8_t sem[16 * 16];
    s = pk_scene_render(scene, pos, quat, 16, 16, 90.0, depth, sem);
    if (s != PK_STATUS_OK) return fail("render", s);
    /* Looking at the +X wall 3 m away. */
    if (!(depth[8 * 16 + 8] > 3.0 && depth[8 * 16 + 8] < 3.02)) return fail("depth value", s);

    s = pk_layout_load("/nonexistent/layout.json", &layout);
    if (s != PK_STATUS_IO || pk_last_error_length() == 0) return fail("missing file", s);

    pk_scene_free(scene);
    pk_layout_free(layout);
    printf("ok %s\n", pk_version());
    return 0;
}
