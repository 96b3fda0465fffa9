/* Plans one act for a scripted scenario and prints an episode record. */
#include <stdio.h>
#include "nrpa_dialogue.h"

static int check(NrpaStatus s, const char *what) {
  if (s != NRPA_STATUS_OK) {
    const char *msg = nrpa_last_error();
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg ? msg : "?");
    return 1;
  }
  return 0;
}

int main(int argc, char **argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s SCENARIO.json\n", argv[0]);
    return 2;
  }
  double w[3] = {0.0, 1.0, 2.0};
  double p[3];
  if (check(nrpa_softmax(w, 3, p), "softmax")) return 1;
  printf("softmax %.6f %.6f %.6f\n", p[0], p[1], p[2]);

  double sl = -1.0;
  if (check(nrpa_compute_sl(300.0, true, 350.0, 240.0, &sl), "sl")) return 1;
  printf("sl %.6f\n", sl);

  NrpaEnv *env = NULL;
  if (check(nrpa_env_load_scripted(argv[1], &env), "load")) return 1;
  NrpaState *state = NULL;
  if (check(nrpa_state_initial(env, &state), "initial")) return 1;
  char *act = NULL;
  if (check(nrpa_plan_next_act(env, state, NULL, 3, &act, NULL), "plan")) return 1;
  printf("act %s\n", act);
  nrpa_string_free(act);

  char *record = NULL;
  if (check(nrpa_run_episode(env, "{\"rng_seed\":1}", 5, &record), "episode")) return 1;
  printf("record %s\n", record);
  nrpa_string_free(record);

  if (nrpa_env_load_scripted("/nonexistent.json", &env) == NRPA_STATUS_OK) return 1;
  printf("error %s\n", nrpa_last_error() ? "set" : "missing");

  nrpa_state_free(state);
  nrpa_env_free(env);
  return 0;
}
