/* C interface to the coherent multi-robot simulator. */

#ifndef COHERENT_H
#define COHERENT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>
#include <stdbool.h>

/**
 * Status codes returned by every ABI function.
 */
typedef enum CoherentStatus {
  CoherentStatus_Ok = 0,
  CoherentStatus_NullArgument = 1,
  CoherentStatus_InvalidUtf8 = 2,
  CoherentStatus_ParseError = 3,
  CoherentStatus_SchemaError = 4,
  CoherentStatus_UnknownEntity = 5,
  /**
   * The action is grammatical but not executable in the current state.
   */
  CoherentStatus_PreconditionFailed = 6,
  /**
   * Scene/task/world handles from different scenes were mixed.
   */
  CoherentStatus_HandleMismatch = 7,
  CoherentStatus_InternalError = 8,
} CoherentStatus;

typedef struct CoherentScene CoherentScene;

typedef struct CoherentTask CoherentTask;

typedef struct CoherentWorld CoherentWorld;

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * is valid until the next library call on the same thread.
 */
const char *coherent_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *coherent_version(void);

/**
 * Free a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be a pointer previously returned through a `char**` out
 * parameter of this library, not yet freed.
 */
void coherent_string_free(char *s);

/**
 * Parse and validate a scene description (JSON). On success the handle owns
 * the built initial state.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CoherentStatus coherent_scene_from_json(const char *json, struct CoherentScene **out);

/**
 * Load one of the built-in benchmark scenes by name.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CoherentStatus coherent_builtin_scene(const char *name, struct CoherentScene **out);

/**
 * # Safety
 * `scene` must be a handle from this library, freed at most once.
 */
void coherent_scene_free(struct CoherentScene *scene);

/**
 * The scene's declared name.
 *
 * # Safety
 * `scene` must be a live scene handle; `out` must be writable.
 */
enum CoherentStatus coherent_scene_name(const struct CoherentScene *scene, char **out);

/**
 * Validate a task description (JSON) against a scene.
 *
 * # Safety
 * `scene` must be a live scene handle; `json` a valid string; `out` writable.
 */
enum CoherentStatus coherent_task_from_json(const struct CoherentScene *scene,
                                            const char *json,
                                            struct CoherentTask **out);

/**
 * Look up a built-in task by id, returning both its scene and the task.
 *
 * # Safety
 * `id` must be a valid string; `out_scene` and `out_task` must be writable.
 */
enum CoherentStatus coherent_builtin_task(const char *id,
                                          struct CoherentScene **out_scene,
                                          struct CoherentTask **out_task);

/**
 * # Safety
 * `task` must be a handle from this library, freed at most once.
 */
void coherent_task_free(struct CoherentTask *task);

/**
 * JSON listing of the built-in suite: id, scene, category, and optimal
 * step count per task.
 *
 * # Safety
 * `out` must be writable.
 */
enum CoherentStatus coherent_suite_list(char **out);

/**
 * Instantiate a world at the scene's initial state.
 *
 * # Safety
 * `scene` must be a live scene handle; `out` must be writable.
 */
enum CoherentStatus coherent_world_new(const struct CoherentScene *scene,
                                       struct CoherentWorld **out);

/**
 * # Safety
 * `world` must be a live world handle; `out` must be writable.
 */
enum CoherentStatus coherent_world_clone(const struct CoherentWorld *world,
                                         struct CoherentWorld **out);

/**
 * # Safety
 * `world` must be a handle from this library, freed at most once.
 */
void coherent_world_free(struct CoherentWorld *world);

/**
 * Render one robot's partial observation, one relation per line.
 *
 * # Safety
 * `world` must be live, `robot` a valid string, `out` writable.
 */
enum CoherentStatus coherent_world_observe(const struct CoherentWorld *world,
                                           const char *robot,
                                           char **out);

/**
 * Render the robot's feasible actions, one per line, sorted.
 *
 * # Safety
 * `world` must be live, `robot` a valid string, `out` writable.
 */
enum CoherentStatus coherent_world_feasible_actions(const struct CoherentWorld *world,
                                                    const char *robot,
                                                    char **out);

/**
 * Check whether `action` (grammar text) is executable by `robot` right now.
 * Returns `Ok` when executable; `PreconditionFailed` otherwise, with the
 * failure code and detail in `out_reason` (when non-null).
 *
 * # Safety
 * `world` must be live; `robot`/`action` valid strings; `out_reason` may be
 * null, otherwise writable.
 */
enum CoherentStatus coherent_world_validate(const struct CoherentWorld *world,
                                            const char *robot,
                                            const char *action,
                                            char **out_reason);

/**
 * Validate and apply one action, advancing the world in place.
 *
 * # Safety
 * `world` must be live and not aliased; `robot`/`action` valid strings.
 */
enum CoherentStatus coherent_world_apply(struct CoherentWorld *world,
                                         const char *robot,
                                         const char *action);

/**
 * Whether the task's goal holds in the world. The task must have been
 * validated against the same scene handle the world came from.
 *
 * # Safety
 * `world` and `task` must be live handles; `out` must be writable.
 */
enum CoherentStatus coherent_world_check_goal(const struct CoherentWorld *world,
                                              const struct CoherentTask *task,
                                              bool *out);

/**
 * Stable hex digest of the world's full relation set.
 *
 * # Safety
 * `world` must be live; `out` must be writable.
 */
enum CoherentStatus coherent_world_digest(const struct CoherentWorld *world, char **out);

/**
 * Replay the task's shipped oracle script through the engine and return a
 * JSON summary: `success`, `steps_taken`, `budget`, and the trace lines.
 *
 * # Safety
 * `scene` and `task` must be live handles from the same scene; `out` must
 * be writable.
 */
enum CoherentStatus coherent_run_oracle(const struct CoherentScene *scene,
                                        const struct CoherentTask *task,
                                        char **out);

#endif  /* COHERENT_H */
