#include <math.h>
#include <stdio.h>
#include "lidarmotion.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "failed: %s (line %d)\n", #cond, __LINE__);      \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(void) {
  LmPlanarMotion local = {0.4, 1.0, -0.5, 3.0, 2.0, 1};
  LmPlanarMotion world, back;
  CHECK(lm_local_to_world(&local, &world) == LM_STATUS_OK);
  CHECK(world.is_local == 0);
  CHECK(lm_world_to_local(&world, 3.0, 2.0, &back) == LM_STATUS_OK);
  CHECK(fabs(back.tx - local.tx) < 1e-12 && fabs(back.ty - local.ty) < 1e-12);

  double xyz[12] = {0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3};
  LmPointCloud *cloud = NULL;
  CHECK(lm_cloud_from_xyz(xyz, 4, NULL, &cloud) == LM_STATUS_OK);
  CHECK(lm_cloud_len(cloud) == 4);
  double p[3];
  CHECK(lm_cloud_point(cloud, 9, p) == LM_STATUS_INVALID_ARGUMENT);
  CHECK(lm_last_error() != NULL);
  lm_cloud_free(cloud);

  LmPointCloud *missing = NULL;
  CHECK(lm_cloud_read_bin("/nonexistent/scan.bin", &missing) == LM_STATUS_IO);
  CHECK(missing == NULL);

  LmBox a = {{0, 0, 0}, {2, 2, 1}, 0};
  LmBox b = {{1, 0, 0}, {2, 2, 1}, 0};
  double iou = 0;
  CHECK(lm_ground_iou(&a, &b, &iou) == LM_STATUS_OK);
  CHECK(fabs(iou - 1.0 / 3.0) < 1e-12);
  printf("ok\n");
  return 0;
}
