#ifndef FIELDXFER_H
#define FIELDXFER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum FxStatus {
  FX_STATUS_OK = 0,
  FX_STATUS_NULL_POINTER = 1,
  FX_STATUS_INVALID_ARGUMENT = 2,
  FX_STATUS_INVALID_INPUT = 3,
  FX_STATUS_OUT_OF_DOMAIN = 4,
  FX_STATUS_NO_CONVERGENCE = 5,
  FX_STATUS_SINGULAR_MAPPING = 6,
  FX_STATUS_IO = 7,
  FX_STATUS_PANIC = 8,
} FxStatus;

/**
 * Field reconstruction family; the degree is passed separately.
 */
typedef enum FxReconstruction {
  FX_RECONSTRUCTION_BILINEAR = 0,
  FX_RECONSTRUCTION_B_SPLINE = 1,
  FX_RECONSTRUCTION_LAGRANGE = 2,
} FxReconstruction;

typedef struct FxField FxField;

typedef struct FxInterpolator FxInterpolator;

typedef struct FxMesh FxMesh;

typedef struct FxSupermesh FxSupermesh;

/**
 * Threading knobs; `threads == 0` uses all cores.
 */
typedef struct FxExecOptions {
  size_t threads;
  bool deterministic;
} FxExecOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *fx_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fx_version(void);

/**
 * Grid field from ascending coordinates and `nx * ny` values, x fastest.
 */
enum FxStatus fx_field_new(const double *xs,
                           size_t nx,
                           const double *ys,
                           size_t ny,
                           const double *values,
                           struct FxField **out);

enum FxStatus fx_field_read_fdf(const char *path, struct FxField **out);

/**
 * Trapezoidal integral of the field over its grid.
 */
enum FxStatus fx_field_trapezoid(const struct FxField *field, double *out);

void fx_field_free(struct FxField *field);

/**
 * Mesh from `2 * n_nodes` coordinates and `4 * n_elements` counter-clockwise
 * node indices.
 */
enum FxStatus fx_mesh_new(const double *nodes,
                          size_t n_nodes,
                          const size_t *elements,
                          size_t n_elements,
                          struct FxMesh **out);

/**
 * Structured `nx × ny` element mesh of the rectangle.
 */
enum FxStatus fx_mesh_rectangle(double x0,
                                double y0,
                                double x1,
                                double y1,
                                size_t nx,
                                size_t ny,
                                struct FxMesh **out);

enum FxStatus fx_mesh_read_qm1(const char *path, struct FxMesh **out);

/**
 * Node count, or 0 for a null handle.
 */
size_t fx_mesh_n_nodes(const struct FxMesh *mesh);

void fx_mesh_free(struct FxMesh *mesh);

enum FxStatus fx_interpolator_new(const struct FxField *field,
                                  enum FxReconstruction kind,
                                  size_t degree,
                                  struct FxInterpolator **out);

/**
 * Evaluates `n` points given as interleaved `x, y` pairs.
 */
enum FxStatus fx_interpolator_eval(const struct FxInterpolator *interp,
                                   const double *points,
                                   size_t n,
                                   double *out);

void fx_interpolator_free(struct FxInterpolator *interp);

/**
 * Gauss-quadrature load vector; `out` must hold `len == n_nodes` values.
 * `opts` may be null.
 */
enum FxStatus fx_assemble_quadrature(const struct FxMesh *mesh,
                                     const struct FxInterpolator *interp,
                                     size_t n_gauss,
                                     const struct FxExecOptions *opts,
                                     double *out,
                                     size_t len);

/**
 * Intersection cache of `mesh` against the grid of `field`.
 */
enum FxStatus fx_supermesh_new(const struct FxMesh *mesh,
                               const struct FxField *field,
                               struct FxSupermesh **out);

/**
 * Number of intersection polygons in the cache, or 0 for a null handle.
 */
size_t fx_supermesh_n_polygons(const struct FxSupermesh *sm);

void fx_supermesh_free(struct FxSupermesh *sm);

/**
 * Cut-cell load vector; `field` must live on the grid the cache was built
 * for. `opts` may be null.
 */
enum FxStatus fx_assemble_supermesh(const struct FxSupermesh *sm,
                                    const struct FxField *field,
                                    enum FxReconstruction kind,
                                    size_t degree,
                                    const struct FxExecOptions *opts,
                                    double *out,
                                    size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIELDXFER_H */
