//! C ABI over `quanta-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`QuantaStatus`]; on failure a message for the calling thread is
//! available from [`quanta_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use quanta_core::cube::{read_cube_file, write_cube_file, CubeError, CubeHeader, PhotonCube};
use quanta_core::metrics::{psnr, ssim};
use quanta_core::recon::{reconstruct, BurstWindow, PipelineConfig};
use quanta_core::sim::{gamma_linearize, make_nano_burst, make_rate_map, BinaryFrame, NanoBurst, NANO_BURST_FRAMES};
use quanta_core::{BayerPattern, Error, Image, RngSpec, SrgbImage, DEFAULT_GAMMA};

/// Result of every fallible call. Values 10 to 16 mirror the `.pcube`
/// reader's error codes.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    BufferTooSmall = 4,
    Codec = 5,
    Panic = 6,
    BadMagic = 10,
    UnsupportedVersion = 11,
    Truncated = 12,
    InvalidHeader = 13,
    Inconsistent = 14,
    OutOfRange = 15,
    Io = 16,
}

/// A `.pcube` photon cube.
pub struct QuantaCube(PhotonCube);

/// A 3-bit (or `n_frames`-level) nano-burst.
pub struct QuantaNanoBurst(NanoBurst);

/// A planar image of doubles, 1 or 3 channels.
pub struct QuantaImage(Image);

/// Header fields of a cube. `bayer` is 0 for monochrome, otherwise
/// 1 RGGB, 2 GRBG, 3 BGGR, 4 GBRG.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantaCubeInfo {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub channels: u32,
    pub bayer: u32,
    pub fps: f64,
    pub alpha: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(QuantaStatus, String);

impl From<CubeError> for Failure {
    fn from(e: CubeError) -> Self {
        let status = match e.code() {
            10 => QuantaStatus::BadMagic,
            11 => QuantaStatus::UnsupportedVersion,
            12 => QuantaStatus::Truncated,
            13 => QuantaStatus::InvalidHeader,
            14 => QuantaStatus::Inconsistent,
            15 => QuantaStatus::OutOfRange,
            _ => QuantaStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Cube(c) => c.into(),
            Error::Io(_) => Failure(QuantaStatus::Io, e.to_string()),
            Error::Codec(_) => Failure(QuantaStatus::Codec, e.to_string()),
            Error::DimensionMismatch(_) => Failure(QuantaStatus::DimensionMismatch, e.to_string()),
            other => Failure(QuantaStatus::InvalidArgument, other.to_string()),
        }
    }
}

fn fail(status: QuantaStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording any error or panic for [`quanta_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QuantaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QuantaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            QuantaStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(QuantaStatus::NullPointer, "path is NULL"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(QuantaStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(QuantaStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(QuantaStatus::NullPointer, format!("{what} is NULL")))
}

fn pattern_from_code(code: u32) -> Result<Option<BayerPattern>, Failure> {
    Ok(BayerPattern::from_code(code)?)
}

fn pattern_code(p: Option<BayerPattern>) -> u32 {
    p.map_or(0, BayerPattern::code)
}

/// Message describing the last failure on this thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn quanta_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn quanta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn quanta_cube_read(path: *const c_char, out: *mut *mut QuantaCube) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cube = read_cube_file(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(QuantaCube(cube)));
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn quanta_cube_write(cube: *const QuantaCube, path: *const c_char) -> QuantaStatus {
    guard(|| {
        let cube = obj(cube, "cube")?;
        write_cube_file(&cube.0, path_arg(path)?)?;
        Ok(())
    })
}

/// Builds a cube from unpacked bits, one byte (0 or 1) per pixel, frames
/// stored back to back.
///
/// # Safety
/// `info` must be readable, `bits` must hold `len` bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_cube_from_bits(
    info: *const QuantaCubeInfo,
    bits: *const u8,
    len: usize,
    out: *mut *mut QuantaCube,
) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let info = *obj(info, "info")?;
        let pattern = pattern_from_code(info.bayer)?;
        let (w, h, n) = (info.width as usize, info.height as usize, info.frame_count as usize);
        let per = w
            .checked_mul(h)
            .ok_or_else(|| fail(QuantaStatus::InvalidArgument, "frame size overflows"))?;
        if per.checked_mul(n) != Some(len) {
            return Err(fail(
                QuantaStatus::DimensionMismatch,
                format!("{n} frames of {w}x{h} need {} bytes, got {len}", per.saturating_mul(n)),
            ));
        }
        let data: &[u8] = if len == 0 { &[] } else { std::slice::from_raw_parts(obj(bits, "bits")?, len) };
        let frames = (0..n)
            .map(|f| BinaryFrame::new(w, h, 1, pattern, data[f * per..(f + 1) * per].to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let header = CubeHeader {
            width: info.width,
            height: info.height,
            frame_count: info.frame_count,
            fps: info.fps,
            channels: info.channels,
            pattern,
            alpha: info.alpha,
            seed: info.seed,
        };
        *out = Box::into_raw(Box::new(QuantaCube(PhotonCube::new(header, frames)?)));
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_cube_info(cube: *const QuantaCube, out: *mut QuantaCubeInfo) -> QuantaStatus {
    guard(|| {
        let h = *obj(cube, "cube")?.0.header();
        *out_ptr(out, "out")? = QuantaCubeInfo {
            width: h.width,
            height: h.height,
            frame_count: h.frame_count,
            channels: h.channels,
            bayer: pattern_code(h.pattern),
            fps: h.fps,
            alpha: h.alpha,
            seed: h.seed,
        };
        Ok(())
    })
}

/// Copies frame `index` as one byte (0 or 1) per pixel into `buf`, which
/// must hold at least `width * height` bytes.
///
/// # Safety
/// `cube` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn quanta_cube_frame_bits(
    cube: *const QuantaCube,
    index: u32,
    buf: *mut u8,
    len: usize,
) -> QuantaStatus {
    guard(|| {
        let cube = obj(cube, "cube")?;
        let frame = cube.0.frames().get(index as usize).ok_or_else(|| {
            fail(
                QuantaStatus::OutOfRange,
                format!("frame {index} out of range (cube has {})", cube.0.frames().len()),
            )
        })?;
        let bits = frame.bits();
        if len < bits.len() {
            return Err(fail(QuantaStatus::BufferTooSmall, format!("need {} bytes, got {len}", bits.len())));
        }
        if !bits.is_empty() {
            ptr::copy_nonoverlapping(bits.as_ptr(), out_ptr(buf, "buf")?, bits.len());
        }
        Ok(())
    })
}

/// # Safety
/// `cube` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn quanta_cube_free(cube: *mut QuantaCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Copies planar data (`channels` planes of `width * height` doubles).
///
/// # Safety
/// `data` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_image_new(
    width: u32,
    height: u32,
    channels: u32,
    data: *const f64,
    len: usize,
    out: *mut *mut QuantaImage,
) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let slice: &[f64] = if len == 0 { &[] } else { std::slice::from_raw_parts(obj(data, "data")?, len) };
        let img = Image::new(width as usize, height as usize, channels as usize, slice.to_vec())?;
        *out = Box::into_raw(Box::new(QuantaImage(img)));
        Ok(())
    })
}

/// Loads an 8- or 16-bit PNG scaled to [0, 1].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_image_load_png(path: *const c_char, out: *mut *mut QuantaImage) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let img = Image::load_png(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(QuantaImage(img)));
        Ok(())
    })
}

/// Writes a 16-bit PNG, clamping to [0, 1].
///
/// # Safety
/// `img` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn quanta_image_save_png16(img: *const QuantaImage, path: *const c_char) -> QuantaStatus {
    guard(|| {
        obj(img, "img")?.0.save_png16(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `img` must be a live handle; each out pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn quanta_image_shape(
    img: *const QuantaImage,
    width: *mut u32,
    height: *mut u32,
    channels: *mut u32,
) -> QuantaStatus {
    guard(|| {
        let img = &obj(img, "img")?.0;
        if let Some(w) = width.as_mut() {
            *w = img.width() as u32;
        }
        if let Some(h) = height.as_mut() {
            *h = img.height() as u32;
        }
        if let Some(c) = channels.as_mut() {
            *c = img.channels() as u32;
        }
        Ok(())
    })
}

/// Copies the planar samples into `buf` (capacity `len` doubles).
///
/// # Safety
/// `img` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn quanta_image_data(img: *const QuantaImage, buf: *mut f64, len: usize) -> QuantaStatus {
    guard(|| {
        let data = obj(img, "img")?.0.data();
        if len < data.len() {
            return Err(fail(QuantaStatus::BufferTooSmall, format!("need {} doubles, got {len}", data.len())));
        }
        if !data.is_empty() {
            ptr::copy_nonoverlapping(data.as_ptr(), out_ptr(buf, "buf")?, data.len());
        }
        Ok(())
    })
}

/// # Safety
/// `img` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn quanta_image_free(img: *mut QuantaImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Simulates one 7-frame nano-burst of an sRGB image in [0, 1].
/// Binary samples use RNG frame indices `first_frame .. first_frame + 7`.
/// `bayer` must be non-zero for 3-channel input and zero for 1-channel input.
///
/// # Safety
/// `srgb` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_simulate_nano_burst(
    srgb: *const QuantaImage,
    alpha: f64,
    bayer: u32,
    seed: u64,
    first_frame: u64,
    out: *mut *mut QuantaNanoBurst,
) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let img = SrgbImage::new(obj(srgb, "srgb")?.0.clone())?;
        let pattern = pattern_from_code(bayer)?;
        if pattern.is_some() != (img.channels() == 3) {
            return Err(fail(
                QuantaStatus::InvalidArgument,
                "a Bayer code is required for 3-channel input and not allowed for 1-channel input",
            ));
        }
        let rate = make_rate_map(&gamma_linearize(&img, DEFAULT_GAMMA)?, alpha, 0.0)?;
        let nb = make_nano_burst(&rate, NANO_BURST_FRAMES, pattern, &RngSpec::new(seed), first_frame)?;
        *out = Box::into_raw(Box::new(QuantaNanoBurst(nb)));
        Ok(())
    })
}

/// # Safety
/// `counts` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_nano_burst_from_counts(
    width: u32,
    height: u32,
    n_frames: u32,
    bayer: u32,
    counts: *const u16,
    len: usize,
    out: *mut *mut QuantaNanoBurst,
) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let slice: &[u16] = if len == 0 { &[] } else { std::slice::from_raw_parts(obj(counts, "counts")?, len) };
        let nb = NanoBurst::from_counts(width as usize, height as usize, n_frames, pattern_from_code(bayer)?, slice.to_vec())?;
        *out = Box::into_raw(Box::new(QuantaNanoBurst(nb)));
        Ok(())
    })
}

/// # Safety
/// `nb` must be a live handle; each out pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn quanta_nano_burst_shape(
    nb: *const QuantaNanoBurst,
    width: *mut u32,
    height: *mut u32,
    n_frames: *mut u32,
    bayer: *mut u32,
) -> QuantaStatus {
    guard(|| {
        let nb = &obj(nb, "nb")?.0;
        if let Some(v) = width.as_mut() {
            *v = nb.width() as u32;
        }
        if let Some(v) = height.as_mut() {
            *v = nb.height() as u32;
        }
        if let Some(v) = n_frames.as_mut() {
            *v = nb.n_frames();
        }
        if let Some(v) = bayer.as_mut() {
            *v = pattern_code(nb.pattern());
        }
        Ok(())
    })
}

/// Copies the per-pixel photon counts into `buf` (capacity `len`).
///
/// # Safety
/// `nb` must be a live handle and `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn quanta_nano_burst_counts(nb: *const QuantaNanoBurst, buf: *mut u16, len: usize) -> QuantaStatus {
    guard(|| {
        let counts = obj(nb, "nb")?.0.counts();
        if len < counts.len() {
            return Err(fail(QuantaStatus::BufferTooSmall, format!("need {} values, got {len}", counts.len())));
        }
        if !counts.is_empty() {
            ptr::copy_nonoverlapping(counts.as_ptr(), out_ptr(buf, "buf")?, counts.len());
        }
        Ok(())
    })
}

/// # Safety
/// `nb` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn quanta_nano_burst_free(nb: *mut QuantaNanoBurst) {
    if !nb.is_null() {
        drop(Box::from_raw(nb));
    }
}

/// Reconstructs the centre frame of an odd-length window of nano-bursts
/// into an sRGB image. `config_json` is a pipeline config in JSON (the
/// same fields as the `pipeline` table of a benchmark spec) or NULL for
/// the defaults.
///
/// # Safety
/// `bursts` must point to `count` live handles, `config_json` must be NULL
/// or a NUL-terminated string, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_reconstruct(
    bursts: *const *const QuantaNanoBurst,
    count: usize,
    config_json: *const c_char,
    out: *mut *mut QuantaImage,
) -> QuantaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        if count == 0 {
            return Err(fail(QuantaStatus::InvalidArgument, "window is empty"));
        }
        let handles = std::slice::from_raw_parts(obj(bursts, "bursts")?, count);
        let frames = handles
            .iter()
            .enumerate()
            .map(|(i, &h)| obj(h, &format!("bursts[{i}]")).map(|b| b.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let cfg: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| fail(QuantaStatus::InvalidArgument, "config is not valid UTF-8"))?;
            serde_json::from_str(text).map_err(|e| fail(QuantaStatus::InvalidArgument, format!("config: {e}")))?
        };
        let img = reconstruct(&BurstWindow::new(frames)?, &cfg)?;
        *out = Box::into_raw(Box::new(QuantaImage(img.into_inner())));
        Ok(())
    })
}

/// Mean per-channel PSNR in dB; `+inf` when the images are identical.
///
/// # Safety
/// `a` and `b` must be live handles and `out_db` writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_psnr(
    a: *const QuantaImage,
    b: *const QuantaImage,
    peak: f64,
    out_db: *mut f64,
) -> QuantaStatus {
    guard(|| {
        let p = psnr(&obj(a, "a")?.0, &obj(b, "b")?.0, peak)?;
        *out_ptr(out_db, "out_db")? = p.db();
        Ok(())
    })
}

/// Mean per-channel SSIM (Gaussian window 11, sigma 1.5).
///
/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn quanta_ssim(a: *const QuantaImage, b: *const QuantaImage, out: *mut f64) -> QuantaStatus {
    guard(|| {
        *out_ptr(out, "out")? = ssim(&obj(a, "a")?.0, &obj(b, "b")?.0)?;
        Ok(())
    })
}
