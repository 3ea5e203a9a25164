/* The public header must compile as plain C. */
#include <stdio.h>

#include "vflowopt/vflowopt.h"

int main(void) {
  vfo_strategy s = {0.4, 0.5, 0.8, 1.0, 0.0, 1};
  vfo_layout layout = {9, 9, 10};
  double avg = 0.0;
  if (vfo_average_retention(&s, layout, &avg) != VFO_OK) {
    fprintf(stderr, "average_retention failed: %s\n", vfo_last_error());
    return 1;
  }
  if (avg < 0.25 - 1e-12 || avg > 0.25 + 1e-12) {
    fprintf(stderr, "unexpected retention %.17g\n", avg);
    return 1;
  }
  printf("vflowopt %s\n", vfo_version());
  return 0;
}
