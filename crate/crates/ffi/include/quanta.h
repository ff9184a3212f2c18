#ifndef QUANTA_H
#define QUANTA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call. Values 10 to 16 mirror the `.pcube`
 reader's error codes.
 */
enum QuantaStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  QUANTA_STATUS_OK = 0,
  QUANTA_STATUS_NULL_POINTER = 1,
  QUANTA_STATUS_INVALID_ARGUMENT = 2,
  QUANTA_STATUS_DIMENSION_MISMATCH = 3,
  QUANTA_STATUS_BUFFER_TOO_SMALL = 4,
  QUANTA_STATUS_CODEC = 5,
  QUANTA_STATUS_PANIC = 6,
  QUANTA_STATUS_BAD_MAGIC = 10,
  QUANTA_STATUS_UNSUPPORTED_VERSION = 11,
  QUANTA_STATUS_TRUNCATED = 12,
  QUANTA_STATUS_INVALID_HEADER = 13,
  QUANTA_STATUS_INCONSISTENT = 14,
  QUANTA_STATUS_OUT_OF_RANGE = 15,
  QUANTA_STATUS_IO = 16,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum QuantaStatus QuantaStatus;
#else
typedef int32_t QuantaStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/*
 A `.pcube` photon cube.
 */
typedef struct QuantaCube QuantaCube;

/*
 A planar image of doubles, 1 or 3 channels.
 */
typedef struct QuantaImage QuantaImage;

/*
 A 3-bit (or `n_frames`-level) nano-burst.
 */
typedef struct QuantaNanoBurst QuantaNanoBurst;

/*
 Header fields of a cube. `bayer` is 0 for monochrome, otherwise
 1 RGGB, 2 GRBG, 3 BGGR, 4 GBRG.
 */
typedef struct {
  uint32_t width;
  uint32_t height;
  uint32_t frame_count;
  uint32_t channels;
  uint32_t bayer;
  double fps;
  double alpha;
  uint64_t seed;
} QuantaCubeInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread, or NULL. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *quanta_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *quanta_version(void);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
QuantaStatus quanta_cube_read(const char *path, QuantaCube **out);

/*
 # Safety
 `cube` must be a live handle and `path` a NUL-terminated string.
 */
QuantaStatus quanta_cube_write(const QuantaCube *cube, const char *path);

/*
 Builds a cube from unpacked bits, one byte (0 or 1) per pixel, frames
 stored back to back.

 # Safety
 `info` must be readable, `bits` must hold `len` bytes, `out` writable.
 */
QuantaStatus quanta_cube_from_bits(const QuantaCubeInfo *info,
                                   const uint8_t *bits,
                                   size_t len,
                                   QuantaCube **out);

/*
 # Safety
 `cube` must be a live handle and `out` writable.
 */
QuantaStatus quanta_cube_info(const QuantaCube *cube, QuantaCubeInfo *out);

/*
 Copies frame `index` as one byte (0 or 1) per pixel into `buf`, which
 must hold at least `width * height` bytes.

 # Safety
 `cube` must be a live handle and `buf` writable for `len` bytes.
 */
QuantaStatus quanta_cube_frame_bits(const QuantaCube *cube,
                                    uint32_t index,
                                    uint8_t *buf,
                                    size_t len);

/*
 # Safety
 `cube` must be NULL or a handle not yet freed.
 */
void quanta_cube_free(QuantaCube *cube);

/*
 Copies planar data (`channels` planes of `width * height` doubles).

 # Safety
 `data` must hold `len` doubles and `out` must be writable.
 */
QuantaStatus quanta_image_new(uint32_t width,
                              uint32_t height,
                              uint32_t channels,
                              const double *data,
                              size_t len,
                              QuantaImage **out);

/*
 Loads an 8- or 16-bit PNG scaled to [0, 1].

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
QuantaStatus quanta_image_load_png(const char *path, QuantaImage **out);

/*
 Writes a 16-bit PNG, clamping to [0, 1].

 # Safety
 `img` must be a live handle and `path` a NUL-terminated string.
 */
QuantaStatus quanta_image_save_png16(const QuantaImage *img, const char *path);

/*
 # Safety
 `img` must be a live handle; each out pointer may be NULL.
 */
QuantaStatus quanta_image_shape(const QuantaImage *img,
                                uint32_t *width,
                                uint32_t *height,
                                uint32_t *channels);

/*
 Copies the planar samples into `buf` (capacity `len` doubles).

 # Safety
 `img` must be a live handle and `buf` writable for `len` doubles.
 */
QuantaStatus quanta_image_data(const QuantaImage *img, double *buf, size_t len);

/*
 # Safety
 `img` must be NULL or a handle not yet freed.
 */
void quanta_image_free(QuantaImage *img);

/*
 Simulates one 7-frame nano-burst of an sRGB image in [0, 1].
 Binary samples use RNG frame indices `first_frame .. first_frame + 7`.
 `bayer` must be non-zero for 3-channel input and zero for 1-channel input.

 # Safety
 `srgb` must be a live handle and `out` writable.
 */
QuantaStatus quanta_simulate_nano_burst(const QuantaImage *srgb,
                                        double alpha,
                                        uint32_t bayer,
                                        uint64_t seed,
                                        uint64_t first_frame,
                                        QuantaNanoBurst **out);

/*
 # Safety
 `counts` must hold `len` values and `out` must be writable.
 */
QuantaStatus quanta_nano_burst_from_counts(uint32_t width,
                                           uint32_t height,
                                           uint32_t n_frames,
                                           uint32_t bayer,
                                           const uint16_t *counts,
                                           size_t len,
                                           QuantaNanoBurst **out);

/*
 # Safety
 `nb` must be a live handle; each out pointer may be NULL.
 */
QuantaStatus quanta_nano_burst_shape(const QuantaNanoBurst *nb,
                                     uint32_t *width,
                                     uint32_t *height,
                                     uint32_t *n_frames,
                                     uint32_t *bayer);

/*
 Copies the per-pixel photon counts into `buf` (capacity `len`).

 # Safety
 `nb` must be a live handle and `buf` writable for `len` values.
 */
QuantaStatus quanta_nano_burst_counts(const QuantaNanoBurst *nb, uint16_t *buf, size_t len);

/*
 # Safety
 `nb` must be NULL or a handle not yet freed.
 */
void quanta_nano_burst_free(QuantaNanoBurst *nb);

/*
 Reconstructs the centre frame of an odd-length window of nano-bursts
 into an sRGB image. `config_json` is a pipeline config in JSON (the
 same fields as the `pipeline` table of a benchmark spec) or NULL for
 the defaults.

 # Safety
 `bursts` must point to `count` live handles, `config_json` must be NULL
 or a NUL-terminated string, and `out` must be writable.
 */
QuantaStatus quanta_reconstruct(const QuantaNanoBurst *const *bursts,
                                size_t count,
                                const char *config_json,
                                QuantaImage **out);

/*
 Mean per-channel PSNR in dB; `+inf` when the images are identical.

 # Safety
 `a` and `b` must be live handles and `out_db` writable.
 */
QuantaStatus quanta_psnr(const QuantaImage *a, const QuantaImage *b, double peak, double *out_db);

/*
 Mean per-channel SSIM (Gaussian window 11, sigma 1.5).

 # Safety
 `a` and `b` must be live handles and `out` writable.
 */
QuantaStatus quanta_ssim(const QuantaImage *a, const QuantaImage *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUANTA_H */
