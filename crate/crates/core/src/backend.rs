//! The segmentation-backend seam: patch in, class probabilities out.
//!
//! Trained networks live outside this crate. Two stub backends make the
//! pipeline testable end to end, and [`ExternalBackend`] attaches any model
//! runtime over a framed stdin/stdout protocol.

use std::fmt;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::morphology::{morph_with_border, Border, MorphOp};
use crate::raster::{central_crop, Raster, RasterSource, Resolution};
use crate::scalar::{exact_mean, Real};
use crate::tiling::{plan_tiles, stitch, stitch_subset, StitchMode, TileCoord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegClass {
    Tumour,
    /// Tumour-associated and inflamed stroma.
    Stroma,
    Other,
}

impl SegClass {
    pub const ALL: [SegClass; 3] = [SegClass::Tumour, SegClass::Stroma, SegClass::Other];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// Per-class tissue probabilities.
    Segmentation,
    /// A single TIL probability map.
    Detection,
}

/// Per-class probabilities for one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProbs<F> {
    pub tumour: Raster<F>,
    pub stroma: Raster<F>,
    pub other: Raster<F>,
}

impl<F: Real> ClassProbs<F> {
    pub fn get(&self, class: SegClass) -> &Raster<F> {
        match class {
            SegClass::Tumour => &self.tumour,
            SegClass::Stroma => &self.stroma,
            SegClass::Other => &self.other,
        }
    }

    fn map(&self, f: impl Fn(&Raster<F>) -> Result<Raster<F>>) -> Result<Self> {
        Ok(ClassProbs {
            tumour: f(&self.tumour)?,
            stroma: f(&self.stroma)?,
            other: f(&self.other)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendOutput<F> {
    Classes(ClassProbs<F>),
    Til(Raster<F>),
}

pub type BackendError = Box<dyn std::error::Error + Send + Sync>;

/// A deterministic patch model.
///
/// Implementations are shared across worker threads (`Send + Sync`), so
/// any per-call mutable state must be synchronized internally.
pub trait SegmentationBackend<F: Real>: Send + Sync {
    fn flavor(&self) -> Flavor;

    /// Required patch size, or `None` when any size is accepted.
    fn input_size(&self) -> Option<(usize, usize)> {
        None
    }

    /// Output rasters must match the patch dimensions.
    fn predict(&self, patch: &Raster<F>) -> std::result::Result<BackendOutput<F>, BackendError>;
}

/// One or more models whose outputs are averaged.
#[derive(Clone)]
pub struct Ensemble<F> {
    members: Vec<Arc<dyn SegmentationBackend<F>>>,
}

impl<F: Real> fmt::Debug for Ensemble<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ensemble")
            .field("members", &self.members.len())
            .field("flavor", &self.flavor())
            .finish()
    }
}

impl<F: Real> Ensemble<F> {
    pub fn new(members: Vec<Arc<dyn SegmentationBackend<F>>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("ensemble needs at least one member"))?;
        let (flavor, size) = (first.flavor(), first.input_size());
        if members
            .iter()
            .any(|m| m.flavor() != flavor || m.input_size() != size)
        {
            return Err(Error::invalid(
                "ensemble members must share flavor and input size",
            ));
        }
        Ok(Ensemble { members })
    }

    /// `k` handles to the same backend.
    pub fn replicate(backend: Arc<dyn SegmentationBackend<F>>, k: usize) -> Result<Self> {
        Self::new(vec![backend; k])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn flavor(&self) -> Flavor {
        self.members[0].flavor()
    }

    pub fn input_size(&self) -> Option<(usize, usize)> {
        self.members[0].input_size()
    }

    fn check(&self, flavor: Flavor, patch: usize) -> Result<()> {
        if self.flavor() != flavor {
            return Err(Error::invalid(format!(
                "expected a {flavor:?} ensemble, got {:?}",
                self.flavor()
            )));
        }
        if let Some(size) = self.input_size() {
            if size != (patch, patch) {
                return Err(Error::invalid(format!(
                    "backend expects {}x{} patches, pipeline uses {patch}x{patch}",
                    size.0, size.1
                )));
            }
        }
        Ok(())
    }

    fn predict_all(&self, patch: &Raster<F>, tile: TileCoord) -> Result<Vec<BackendOutput<F>>> {
        self.members
            .iter()
            .map(|m| {
                let out = m.predict(patch).map_err(|e| Error::Backend {
                    tile,
                    message: e.to_string(),
                })?;
                let ok = match &out {
                    BackendOutput::Classes(c) => SegClass::ALL
                        .iter()
                        .all(|&k| c.get(k).same_shape(patch)),
                    BackendOutput::Til(t) => t.same_shape(patch),
                };
                if !ok {
                    return Err(Error::Backend {
                        tile,
                        message: "output size differs from patch size".into(),
                    });
                }
                Ok(out)
            })
            .collect()
    }

    fn predict_classes(&self, patch: &Raster<F>, tile: TileCoord) -> Result<ClassProbs<F>> {
        let outs = self.predict_all(patch, tile)?;
        let mut per_class: [Vec<Raster<F>>; 3] = Default::default();
        for out in outs {
            match out {
                BackendOutput::Classes(c) => {
                    per_class[0].push(c.tumour);
                    per_class[1].push(c.stroma);
                    per_class[2].push(c.other);
                }
                BackendOutput::Til(_) => {
                    return Err(Error::Backend {
                        tile,
                        message: "detection output from a segmentation ensemble".into(),
                    })
                }
            }
        }
        let place = |r: Raster<F>| r.with_origin(patch.origin());
        let [t, s, o] = per_class;
        Ok(ClassProbs {
            tumour: place(ensemble_average(&t)?),
            stroma: place(ensemble_average(&s)?),
            other: place(ensemble_average(&o)?),
        })
    }

    fn predict_til(&self, patch: &Raster<F>, tile: TileCoord) -> Result<Raster<F>> {
        let outs = self.predict_all(patch, tile)?;
        let maps = outs
            .into_iter()
            .map(|o| match o {
                BackendOutput::Til(t) => Ok(t),
                BackendOutput::Classes(_) => Err(Error::Backend {
                    tile,
                    message: "segmentation output from a detection ensemble".into(),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ensemble_average(&maps)?.with_origin(patch.origin()))
    }
}

/// Per-pixel mean of the member outputs.
///
/// The mean uses a correctly rounded sum, so the result does not depend on
/// member order and repeating every member leaves it unchanged.
pub fn ensemble_average<F: Real>(outputs: &[Raster<F>]) -> Result<Raster<F>> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::invalid("ensemble_average of zero outputs"))?;
    for o in &outputs[1..] {
        first.check_same_shape(o, "ensemble_average")?;
    }
    if outputs.len() == 1 {
        return Ok(first.clone());
    }
    let mut buf = vec![F::zero(); outputs.len()];
    let mut out = first.clone();
    for (i, px) in out.pixels_mut().iter_mut().enumerate() {
        for (b, o) in buf.iter_mut().zip(outputs) {
            *b = o.pixels()[i];
        }
        *px = exact_mean(&buf);
    }
    Ok(out)
}

/// `1` where the probability is at least `t`.
pub fn threshold<F: Real>(prob: &Raster<F>, t: f64) -> Result<Raster<u8>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
    }
    let t = F::of(t);
    Ok(prob.map(|v| u8::from(v >= t)))
}

/// Binary tissue masks at the segmentation level.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMasks {
    pub tumour: Raster<u8>,
    pub stroma: Raster<u8>,
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

fn check_level(source_mpp: f64, want: f64, what: &str) -> Result<()> {
    if (source_mpp - want).abs() > 1e-6 * want {
        return Err(Error::invalid(format!(
            "{what} source is at {source_mpp} mpp, config expects {want}"
        )));
    }
    Ok(())
}

/// Tissue segmentation over a whole slide level.
///
/// Overlapping padded patches go through the ensemble; each averaged output is
/// centrally cropped, crops are stitched, thresholded per class, and the
/// tumour mask is opened to remove speckle.
pub fn run_segmentation<F: Real>(
    source: &dyn RasterSource<F>,
    ensemble: &Ensemble<F>,
    cfg: &PipelineConfig,
) -> Result<SegMasks> {
    let s = &cfg.seg;
    ensemble.check(Flavor::Segmentation, s.patch)?;
    check_level(source.resolution().mpp, s.mpp, "segmentation")?;
    let (w, h) = source.dims();
    let plan = plan_tiles(w, h, s.patch, s.stride, s.pad)?;
    let pool = thread_pool(cfg.workers)?;

    let outputs: Vec<(TileCoord, ClassProbs<F>)> = pool.install(|| {
        plan.coords
            .par_iter()
            .map(|c| {
                let (x, y) = plan.local_offset(c);
                let patch = source.read_window(x, y, c.w, c.h)?;
                let probs = ensemble.predict_classes(&patch, *c)?;
                let cropped = probs.map(|r| central_crop(r, s.crop, s.crop))?;
                Ok((*c, cropped))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let class_map = |class: SegClass| -> Result<Raster<F>> {
        let parts: Vec<(TileCoord, Raster<F>)> = outputs
            .iter()
            .map(|(c, p)| (*c, p.get(class).clone()))
            .collect();
        stitch(&parts, &plan, StitchMode::Average)
    };
    let tumour_prob = class_map(SegClass::Tumour)?;
    let stroma_prob = class_map(SegClass::Stroma)?;
    let tumour = threshold(&tumour_prob, s.threshold.tumour)?;
    let stroma = threshold(&stroma_prob, s.threshold.stroma)?;
    // Tissue touching the slide edge is not speckle.
    let tumour = morph_with_border(&tumour, MorphOp::Open, s.open_radius_px, Border::Ignore)?;
    Ok(SegMasks { tumour, stroma })
}

/// True when any ROI pixel overlaps the physical extent of the level window.
fn roi_intersects(roi: &Raster<u8>, mpp: f64, x: usize, y: usize, w: usize, h: usize) -> bool {
    let rm = roi.resolution().mpp;
    let (ox, oy) = roi.origin();
    let to_roi = |p: usize| p as f64 * mpp / rm;
    let x0 = (to_roi(x).floor() as i64 - ox).max(0);
    let y0 = (to_roi(y).floor() as i64 - oy).max(0);
    let x1 = (to_roi(x + w).ceil() as i64 - ox).min(roi.width() as i64);
    let y1 = (to_roi(y + h).ceil() as i64 - oy).min(roi.height() as i64);
    (y0..y1).any(|ry| (x0..x1).any(|rx| roi.get(rx as usize, ry as usize) != 0))
}

/// TIL probability map over a whole slide level.
///
/// The level is cut into a grid of outer tiles; each is split into
/// overlapping inner patches whose ensemble-averaged outputs are stitched.
/// With an ROI, outer tiles that miss it are skipped and stay zero.
pub fn run_detection<F: Real>(
    source: &dyn RasterSource<F>,
    ensemble: &Ensemble<F>,
    cfg: &PipelineConfig,
    roi: Option<&Raster<u8>>,
) -> Result<Raster<F>> {
    let d = &cfg.det;
    ensemble.check(Flavor::Detection, d.patch)?;
    check_level(source.resolution().mpp, d.mpp, "detection")?;
    let (w, h) = source.dims();
    let res = source.resolution();

    let mut outer = Vec::new();
    for ty in (0..h).step_by(d.tile) {
        for tx in (0..w).step_by(d.tile) {
            let tw = d.tile.min(w - tx);
            let th = d.tile.min(h - ty);
            if roi.is_none_or(|m| roi_intersects(m, res.mpp, tx, ty, tw, th)) {
                outer.push((tx, ty, tw, th));
            }
        }
    }
    log::debug!("detection: {} outer tiles", outer.len());

    let pool = thread_pool(cfg.workers)?;
    let tiles: Vec<Raster<F>> = pool.install(|| {
        outer
            .par_iter()
            .map(|&(tx, ty, tw, th)| detect_tile(source, ensemble, cfg, res, tx, ty, tw, th))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Raster::<F>::new(w, h, res);
    for tile in &tiles {
        let (ox, oy) = (tile.origin().0 as usize, tile.origin().1 as usize);
        for y in 0..tile.height() {
            let row = tile.row(y);
            let start = (oy + y) * w + ox;
            out.pixels_mut()[start..start + row.len()].copy_from_slice(row);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn detect_tile<F: Real>(
    source: &dyn RasterSource<F>,
    ensemble: &Ensemble<F>,
    cfg: &PipelineConfig,
    res: Resolution,
    tx: usize,
    ty: usize,
    tw: usize,
    th: usize,
) -> Result<Raster<F>> {
    let d = &cfg.det;
    let plan = plan_tiles(tw, th, d.patch, d.stride, 0)?;
    let patches = plan
        .coords
        .par_iter()
        .map(|c| {
            let patch =
                source.read_window((tx + c.x) as i64, (ty + c.y) as i64, c.w, c.h)?;
            let global = TileCoord::new(tx + c.x, ty + c.y, c.w, c.h);
            Ok((*c, ensemble.predict_til(&patch, global)?))
        })
        .collect::<Result<Vec<_>>>()?;
    stitch_subset(&patches, tw, th, (tx as i64, ty as i64), res, d.stitch)
}

/// Emits co-registered ground truth as probabilities.
///
/// Segmentation flavor holds tumour and stroma masks; detection flavor holds
/// a TIL mask. Truth rasters must be at the level the patches come from.
pub struct PassthroughBackend<F> {
    flavor: Flavor,
    truth: Vec<Raster<F>>,
}

impl<F: Real> PassthroughBackend<F> {
    pub fn segmentation(tumour: Raster<F>, stroma: Raster<F>) -> Result<Self> {
        tumour.check_same_shape(&stroma, "passthrough truth")?;
        Ok(PassthroughBackend {
            flavor: Flavor::Segmentation,
            truth: vec![tumour, stroma],
        })
    }

    pub fn detection(til: Raster<F>) -> Self {
        PassthroughBackend {
            flavor: Flavor::Detection,
            truth: vec![til],
        }
    }
}

impl<F: Real> SegmentationBackend<F> for PassthroughBackend<F> {
    fn flavor(&self) -> Flavor {
        self.flavor
    }

    fn predict(&self, patch: &Raster<F>) -> std::result::Result<BackendOutput<F>, BackendError> {
        let (x, y) = patch.origin();
        let (w, h) = patch.dims();
        let read = |t: &Raster<F>| -> std::result::Result<Raster<F>, BackendError> {
            if (t.resolution().mpp - patch.resolution().mpp).abs() > 1e-9 {
                return Err("truth and patch resolutions differ".into());
            }
            Ok(t.read_window(x, y, w, h)?.map(|v| v.max(F::zero()).min(F::one())))
        };
        Ok(match self.flavor {
            Flavor::Segmentation => {
                let tumour = read(&self.truth[0])?;
                let stroma = read(&self.truth[1])?;
                let mut other = tumour.clone();
                for ((o, &t), &s) in other
                    .pixels_mut()
                    .iter_mut()
                    .zip(tumour.pixels())
                    .zip(stroma.pixels())
                {
                    *o = (F::one() - t - s).max(F::zero());
                }
                BackendOutput::Classes(ClassProbs {
                    tumour,
                    stroma,
                    other,
                })
            }
            Flavor::Detection => BackendOutput::Til(read(&self.truth[0])?),
        })
    }
}

/// Intensity-band heuristic on a grayscale patch in [0, 1].
///
/// Segmentation: darker than `tumour_below` is tumour, darker than
/// `stroma_below` is stroma, the rest is other. Detection: darker than
/// `til_below` is a TIL.
#[derive(Clone, Debug)]
pub struct LuminanceBackend {
    pub flavor: Flavor,
    pub tumour_below: f64,
    pub stroma_below: f64,
    pub til_below: f64,
}

impl LuminanceBackend {
    pub fn new(flavor: Flavor) -> Self {
        LuminanceBackend {
            flavor,
            tumour_below: 0.4,
            stroma_below: 0.75,
            til_below: 0.2,
        }
    }
}

impl<F: Real> SegmentationBackend<F> for LuminanceBackend {
    fn flavor(&self) -> Flavor {
        self.flavor
    }

    fn predict(&self, patch: &Raster<F>) -> std::result::Result<BackendOutput<F>, BackendError> {
        let band = |lo: f64, hi: f64| {
            let (lo, hi) = (F::of(lo), F::of(hi));
            patch.map(move |v| if v >= lo && v < hi { F::one() } else { F::zero() })
        };
        Ok(match self.flavor {
            Flavor::Segmentation => BackendOutput::Classes(ClassProbs {
                tumour: band(f64::NEG_INFINITY, self.tumour_below),
                stroma: band(self.tumour_below, self.stroma_below),
                other: band(self.stroma_below, f64::INFINITY),
            }),
            Flavor::Detection => BackendOutput::Til(band(f64::NEG_INFINITY, self.til_below)),
        })
    }
}

/// Largest frame accepted from a subprocess (256 MiB).
pub const MAX_FRAME_BYTES: usize = 256 << 20;

/// Write one frame: `u32` little-endian byte length, then `f32` LE values.
pub fn write_frame(w: &mut impl Write, values: &[f32]) -> io::Result<()> {
    let bytes = values.len() * 4;
    if bytes > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(bytes as u32).to_le_bytes())?;
    let mut payload = Vec::with_capacity(bytes);
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    w.flush()
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Vec<f32>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let bytes = u32::from_le_bytes(len) as usize;
    if bytes > MAX_FRAME_BYTES || !bytes.is_multiple_of(4) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad frame length {bytes}"),
        ));
    }
    let mut payload = vec![0u8; bytes];
    r.read_exact(&mut payload)?;
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

struct Channel {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// A model served by a subprocess, one patch per request.
///
/// Request payload: the patch, row-major. Response payload: the TIL map
/// (detection) or tumour, stroma and other planes back to back
/// (segmentation). Requests are serialized through a mutex, so one
/// subprocess is shared by all workers.
pub struct ExternalBackend {
    flavor: Flavor,
    size: (usize, usize),
    argv: Vec<String>,
    channel: Mutex<Channel>,
}

impl ExternalBackend {
    pub fn spawn(argv: &[String], flavor: Flavor, size: (usize, usize)) -> io::Result<Self> {
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalBackend {
            flavor,
            size,
            argv: argv.to_vec(),
            channel: Mutex::new(Channel {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

impl<F: Real> SegmentationBackend<F> for ExternalBackend {
    fn flavor(&self) -> Flavor {
        self.flavor
    }

    fn input_size(&self) -> Option<(usize, usize)> {
        Some(self.size)
    }

    fn predict(&self, patch: &Raster<F>) -> std::result::Result<BackendOutput<F>, BackendError> {
        let request: Vec<f32> = patch
            .pixels()
            .iter()
            .map(|v| v.to_f32().unwrap_or(0.0))
            .collect();
        let response = {
            let mut ch = self
                .channel
                .lock()
                .map_err(|_| "backend channel poisoned")?;
            write_frame(&mut ch.stdin, &request)?;
            read_frame(&mut ch.stdout)?
        };
        let n = patch.len();
        let planes = match self.flavor {
            Flavor::Segmentation => 3,
            Flavor::Detection => 1,
        };
        if response.len() != planes * n {
            return Err(format!(
                "{}: expected {} values, got {}",
                self.argv.join(" "),
                planes * n,
                response.len()
            )
            .into());
        }
        let plane = |i: usize| {
            let data = response[i * n..(i + 1) * n]
                .iter()
                .map(|&v| F::of(f64::from(v)))
                .collect();
            Raster::from_vec(patch.width(), patch.height(), patch.resolution(), data)
                .map(|r| r.with_origin(patch.origin()))
        };
        Ok(match self.flavor {
            Flavor::Segmentation => BackendOutput::Classes(ClassProbs {
                tumour: plane(0)?,
                stroma: plane(1)?,
                other: plane(2)?,
            }),
            Flavor::Detection => BackendOutput::Til(plane(0)?),
        })
    }
}
