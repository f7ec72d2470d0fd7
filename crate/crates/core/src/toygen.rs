//! Synthetic handwritten-digit data with morphological perturbations.
//!
//! The glyphs are jittered polyline templates, not MNIST, and the
//! perturbations are simplified re-implementations of thinning, thickening,
//! fractures and swelling. They reproduce the qualitative behaviour (thin
//! strokes lose area, fractures cut strokes, swelling bulges them) without
//! matching MorphoMNIST's exact parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    CategoryDictionary, DatasetTable, ImageStack, MetadataColumn, Predicate, Record, ScenarioConfig,
    ScenarioDef, TableSchema, MISSING_VALUE,
};
use crate::resample::{rng, stream_rng};
use crate::{Error, Result};

pub const SIZE: usize = 28;
pub const THRESHOLD: u8 = 128;
/// Half the nominal stroke width of a base glyph.
pub const STROKE_RADIUS: f64 = 1.5;
pub const FRACTURE_LENGTH: f64 = 6.0;
pub const FRACTURE_WIDTH: f64 = 2.0;
pub const MAX_FRACTURES: usize = 2;
pub const SWELL_RADIUS: f64 = 7.0;
pub const SWELL_EXPONENT: f64 = 0.5;

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Plain,
    Thin,
    Thick,
    Fracture,
    Swelling,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::Plain,
        PerturbationKind::Thin,
        PerturbationKind::Thick,
        PerturbationKind::Fracture,
        PerturbationKind::Swelling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Plain => "plain",
            PerturbationKind::Thin => "thin",
            PerturbationKind::Thick => "thick",
            PerturbationKind::Fracture => "fracture",
            PerturbationKind::Swelling => "swelling",
        }
    }

    pub fn adjective(self) -> &'static str {
        match self {
            PerturbationKind::Plain => "plain",
            PerturbationKind::Thin => "thin",
            PerturbationKind::Thick => "thick",
            PerturbationKind::Fracture => "fractured",
            PerturbationKind::Swelling => "swollen",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown perturbation {s:?}")))
    }
}

type Polyline = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64) -> Polyline {
    (0..=20)
        .map(|k| {
            let t = k as f64 / 20.0 * std::f64::consts::TAU;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Stroke templates in the unit square, y pointing down.
fn template(digit: usize) -> Vec<Polyline> {
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.3, 0.45)],
        1 => vec![vec![(0.3, 0.22), (0.55, 0.05), (0.55, 0.95)]],
        2 => vec![vec![
            (0.2, 0.25),
            (0.35, 0.07),
            (0.65, 0.07),
            (0.8, 0.25),
            (0.75, 0.45),
            (0.2, 0.95),
            (0.85, 0.95),
        ]],
        3 => vec![vec![
            (0.2, 0.1),
            (0.75, 0.1),
            (0.45, 0.45),
            (0.75, 0.6),
            (0.75, 0.85),
            (0.5, 0.95),
            (0.2, 0.88),
        ]],
        4 => vec![vec![(0.65, 0.95), (0.65, 0.05), (0.15, 0.65), (0.85, 0.65)]],
        5 => vec![vec![
            (0.8, 0.05),
            (0.3, 0.05),
            (0.25, 0.45),
            (0.6, 0.4),
            (0.8, 0.6),
            (0.75, 0.85),
            (0.5, 0.95),
            (0.2, 0.88),
        ]],
        6 => vec![vec![
            (0.7, 0.05),
            (0.35, 0.4),
            (0.25, 0.7),
            (0.35, 0.92),
            (0.6, 0.95),
            (0.75, 0.75),
            (0.6, 0.55),
            (0.35, 0.6),
            (0.27, 0.7),
        ]],
        7 => vec![vec![(0.15, 0.07), (0.85, 0.07), (0.4, 0.95)]],
        8 => vec![ellipse(0.5, 0.28, 0.22, 0.2), ellipse(0.5, 0.72, 0.27, 0.23)],
        9 => vec![ellipse(0.5, 0.32, 0.25, 0.22), vec![(0.75, 0.32), (0.7, 0.95)]],
        _ => unreachable!("digit templates cover 0..=9"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (p.0 - a.0 - t * vx, p.1 - a.1 - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Draws one jittered glyph of `digit` as a 28×28 anti-aliased image.
pub fn render_glyph<R: Rng>(digit: usize, rng: &mut R) -> Vec<u8> {
    let scale = 20.0 * rng.gen_range(0.9..1.1);
    let aspect = rng.gen_range(0.85..1.15);
    let angle: f64 = rng.gen_range(-0.15..0.15);
    let shear = rng.gen_range(-0.2..0.2);
    let (tx, ty) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    let (s, c) = angle.sin_cos();
    let strokes: Vec<Polyline> = template(digit)
        .into_iter()
        .map(|line| {
            line.into_iter()
                .map(|(u, v)| {
                    let x = (u - 0.5 + rng.gen_range(-0.02..0.02)) * aspect;
                    let y = v - 0.5 + rng.gen_range(-0.02..0.02);
                    let x = x + shear * y;
                    let (x, y) = (c * x - s * y, s * x + c * y);
                    (SIZE as f64 / 2.0 + tx + scale * x, SIZE as f64 / 2.0 + ty + scale * y)
                })
                .collect()
        })
        .collect();
    let mut img = vec![0u8; SIZE * SIZE];
    for y in 0..SIZE {
        for x in 0..SIZE {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|l| l.windows(2).map(|w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let coverage = (STROKE_RADIUS + 0.5 - d).clamp(0.0, 1.0);
            img[y * SIZE + x] = (coverage * 255.0).round() as u8;
        }
    }
    img
}

/// `n` glyphs with labels `i % 10`; glyph `i` depends only on `(seed, i)`.
pub fn base_glyphs(n: usize, seed: u64) -> Result<(ImageStack, Vec<u8>)> {
    if n == 0 {
        return Err(Error::invalid("base_glyphs needs n >= 1"));
    }
    let images: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|i| render_glyph(i % 10, &mut stream_rng(seed, i as u64)))
        .collect();
    let labels = (0..n).map(|i| (i % 10) as u8).collect();
    Ok((ImageStack::from_images(SIZE, SIZE, &images)?, labels))
}

fn foreground(image: &[u8]) -> Vec<bool> {
    image.iter().map(|&p| p >= THRESHOLD).collect()
}

fn check_image(image: &[u8], height: usize, width: usize) -> Result<Vec<bool>> {
    if image.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            found: image.len(),
        });
    }
    let fg = foreground(image);
    if !fg.iter().any(|&b| b) {
        return Err(Error::invalid("image has no foreground above threshold"));
    }
    Ok(fg)
}

const CROSS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Grayscale erosion (`min`) or dilation (`max`) with a 3×3 cross. After
/// thresholding this is exactly the binary operation on the mask.
fn cross_filter(image: &[u8], height: usize, width: usize, erode: bool) -> Vec<u8> {
    let mut out = image.to_vec();
    for y in 0..height {
        for x in 0..width {
            let mut v = image[y * width + x];
            for (dx, dy) in CROSS {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                let inside = nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height;
                let n = if inside { image[ny as usize * width + nx as usize] } else { 0 };
                v = if erode { v.min(n) } else { v.max(n) };
            }
            out[y * width + x] = v;
        }
    }
    out
}

fn random_foreground_pixel<R: Rng>(fg: &[bool], width: usize, rng: &mut R) -> (f64, f64) {
    let pixels: Vec<usize> = (0..fg.len()).filter(|&i| fg[i]).collect();
    let k = pixels[rng.gen_range(0..pixels.len())];
    ((k % width) as f64, (k / width) as f64)
}

/// Orientation of the stroke around `(cx, cy)` from local second moments.
fn local_stroke_angle(fg: &[bool], width: usize, cx: f64, cy: f64) -> f64 {
    let (mut sxx, mut syy, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0);
    let mut mean = (0.0, 0.0);
    let near: Vec<(f64, f64)> = (0..fg.len())
        .filter(|&i| fg[i])
        .map(|i| ((i % width) as f64, (i / width) as f64))
        .filter(|&(x, y)| (x - cx).hypot(y - cy) <= 3.0)
        .collect();
    for &(x, y) in &near {
        mean.0 += x;
        mean.1 += y;
        n += 1.0;
    }
    mean = (mean.0 / n, mean.1 / n);
    for &(x, y) in &near {
        let (dx, dy) = (x - mean.0, y - mean.1);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    0.5 * (2.0 * sxy).atan2(sxx - syy)
}

fn fracture<R: Rng>(image: &[u8], fg: &[bool], height: usize, width: usize, rng: &mut R) -> Vec<u8> {
    let mut out = image.to_vec();
    let count = rng.gen_range(1..=MAX_FRACTURES);
    for _ in 0..count {
        let (cx, cy) = random_foreground_pixel(fg, width, rng);
        // cut across the stroke
        let theta = local_stroke_angle(fg, width, cx, cy) + std::f64::consts::FRAC_PI_2;
        let half = FRACTURE_LENGTH / 2.0;
        let a = (cx - half * theta.cos(), cy - half * theta.sin());
        let b = (cx + half * theta.cos(), cy + half * theta.sin());
        for y in 0..height {
            for x in 0..width {
                if segment_distance((x as f64, y as f64), a, b) <= FRACTURE_WIDTH / 2.0 {
                    out[y * width + x] = 0;
                }
            }
        }
    }
    out
}

fn bilinear(image: &[u8], height: usize, width: usize, x: f64, y: f64) -> f64 {
    let px = |xi: isize, yi: isize| -> f64 {
        if xi < 0 || yi < 0 || xi as usize >= width || yi as usize >= height {
            0.0
        } else {
            image[yi as usize * width + xi as usize] as f64
        }
    };
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    px(xi, yi) * (1.0 - fx) * (1.0 - fy)
        + px(xi + 1, yi) * fx * (1.0 - fy)
        + px(xi, yi + 1) * (1.0 - fx) * fy
        + px(xi + 1, yi + 1) * fx * fy
}

fn swell<R: Rng>(image: &[u8], fg: &[bool], height: usize, width: usize, rng: &mut R) -> Vec<u8> {
    let (cx, cy) = random_foreground_pixel(fg, width, rng);
    let mut out = image.to_vec();
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let r = dx.hypot(dy);
            if r == 0.0 || r >= SWELL_RADIUS {
                continue;
            }
            // pull samples toward the centre, which pushes content outward
            let k = (r / SWELL_RADIUS).powf(SWELL_EXPONENT);
            let v = bilinear(image, height, width, cx + dx * k, cy + dy * k);
            out[y * width + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Applies one perturbation. Deterministic per `(image, kind, seed)`.
pub fn perturb(image: &[u8], height: usize, width: usize, kind: PerturbationKind, seed: u64) -> Result<Vec<u8>> {
    let fg = check_image(image, height, width)?;
    let mut r = rng(seed);
    Ok(match kind {
        PerturbationKind::Plain => image.to_vec(),
        PerturbationKind::Thin => cross_filter(image, height, width, true),
        PerturbationKind::Thick => cross_filter(image, height, width, false),
        PerturbationKind::Fracture => fracture(image, &fg, height, width, &mut r),
        PerturbationKind::Swelling => swell(image, &fg, height, width, &mut r),
    })
}

/// "Image of a handwritten {adjective} {digit}".
pub fn caption(label: usize, kind: PerturbationKind) -> Result<String> {
    let word = DIGIT_WORDS
        .get(label)
        .ok_or_else(|| Error::invalid(format!("caption label {label} is not a digit")))?;
    Ok(format!("Image of a handwritten {} {word}", kind.adjective()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphometrics {
    pub area: f64,
    pub length: f64,
    pub thickness: f64,
    /// Radians; positive leans right.
    pub slant: f64,
    pub width: f64,
    pub height: f64,
}

impl Morphometrics {
    pub const NAMES: [&'static str; 6] = ["area", "length", "thickness", "slant", "width", "height"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.area, self.length, self.thickness, self.slant, self.width, self.height]
    }
}

/// Zhang–Suen thinning of a binary mask.
pub fn skeletonize(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut m = mask.to_vec();
    let at = |m: &[bool], x: isize, y: isize| -> u8 {
        (x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && m[y as usize * width + x as usize])
            as u8
    };
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut remove = Vec::new();
            for y in 0..height as isize {
                for x in 0..width as isize {
                    if at(&m, x, y) == 0 {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        at(&m, x, y - 1),
                        at(&m, x + 1, y - 1),
                        at(&m, x + 1, y),
                        at(&m, x + 1, y + 1),
                        at(&m, x, y + 1),
                        at(&m, x - 1, y + 1),
                        at(&m, x - 1, y),
                        at(&m, x - 1, y - 1),
                    ];
                    let b: u8 = p.iter().sum();
                    let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let cond = if step == 0 {
                        p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                    } else {
                        p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                    };
                    if (2..=6).contains(&b) && a == 1 && cond {
                        remove.push(y as usize * width + x as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                m[i] = false;
            }
        }
        if !changed {
            return m;
        }
    }
}

pub fn morphometrics(image: &[u8], height: usize, width: usize) -> Result<Morphometrics> {
    let fg = check_image(image, height, width)?;
    let pts: Vec<(f64, f64)> = (0..fg.len())
        .filter(|&i| fg[i])
        .map(|i| ((i % width) as f64, (i / width) as f64))
        .collect();
    let area = pts.len() as f64;
    let length = skeletonize(&fg, height, width).iter().filter(|&&b| b).count() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / area, b + y / area));
    let (mu11, mu02) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        (a + (x - mx) * (y - my), b + (y - my) * (y - my))
    });
    let slant = if mu02 > 0.0 { (-mu11 / mu02).atan() } else { 0.0 };
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
        (lo.min(x), hi.max(x))
    });
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
        (lo.min(y), hi.max(y))
    });
    Ok(Morphometrics {
        area,
        length,
        thickness: area / length.max(1.0),
        slant,
        width: x1 - x0 + 1.0,
        height: y1 - y0 + 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Base glyphs in the training pool; each appears once per perturbation.
    pub n_per_kind: usize,
    /// Extra held-out glyphs, each with one perturbation, forming a `test`
    /// scenario used as the FID reference.
    pub test_per_kind: usize,
    pub seed: u64,
}

pub struct ToyDataset {
    pub images: ImageStack,
    pub table: DatasetTable,
    pub scenarios: ScenarioConfig,
}

pub fn toy_schema() -> TableSchema {
    TableSchema {
        id_column: "sample_id".into(),
        label_column: "label".into(),
        group_column: Some("group".into()),
        image_index_column: Some("image_index".into()),
        metadata: Morphometrics::NAMES.iter().map(|n| MetadataColumn::numeric(n)).collect(),
        tags: vec!["perturbation".into(), "split".into()],
        class_names: None,
    }
}

fn scenario(name: &str, filter: &str) -> ScenarioDef {
    ScenarioDef {
        name: name.to_string(),
        filter: Predicate::parse(filter).expect("generated filters parse"),
    }
}

/// The nine scenarios: one pool per perturbation and the four unions of the
/// plain pool with each other pool.
pub fn build_scenarios(n_per_kind: usize, seed: u64) -> Result<ToyDataset> {
    build_toy(&ToyConfig {
        n_per_kind,
        test_per_kind: 0,
        seed,
    })
}

pub fn build_toy(cfg: &ToyConfig) -> Result<ToyDataset> {
    check_config(cfg)?;
    let (base, labels) = base_glyphs(cfg.n_per_kind + cfg.test_per_kind, cfg.seed)?;
    build_toy_from(&base, &labels, cfg)
}

fn check_config(cfg: &ToyConfig) -> Result<()> {
    if cfg.n_per_kind < 10 {
        return Err(Error::invalid(format!(
            "n_per_kind must be at least 10, got {}",
            cfg.n_per_kind
        )));
    }
    Ok(())
}

/// Same as [`build_toy`] over a given base stack (e.g. real MNIST digits);
/// the first `n_per_kind + test_per_kind` images are used.
pub fn build_toy_from(base: &ImageStack, labels: &[u8], cfg: &ToyConfig) -> Result<ToyDataset> {
    check_config(cfg)?;
    let n_base = cfg.n_per_kind + cfg.test_per_kind;
    if base.count() < n_base || labels.len() != base.count() {
        return Err(Error::invalid(format!(
            "need {n_base} base images with labels, got {} images and {} labels",
            base.count(),
            labels.len()
        )));
    }
    if (base.height(), base.width()) != (SIZE, SIZE) {
        return Err(Error::invalid(format!(
            "base images must be {SIZE}x{SIZE}, got {}x{}",
            base.height(),
            base.width()
        )));
    }
    if let Some(&l) = labels[..n_base].iter().find(|&&l| l > 9) {
        return Err(Error::invalid(format!("digit label {l} out of range")));
    }
    let mut jobs: Vec<(usize, PerturbationKind, &str)> = Vec::new();
    for kind in PerturbationKind::ALL {
        jobs.extend((0..cfg.n_per_kind).map(|j| (j, kind, "train")));
    }
    jobs.extend((cfg.n_per_kind..n_base).map(|j| (j, PerturbationKind::ALL[j % 5], "test")));

    let perturb_seeds = cfg.seed.wrapping_add(1);
    let samples: Vec<(Vec<u8>, Record)> = jobs
        .par_iter()
        .enumerate()
        .map(|(row, &(j, kind, split))| {
            let stream = (j * PerturbationKind::ALL.len() + kind as usize) as u64;
            let seed = stream_rng(perturb_seeds, stream).next_u64();
            let img = perturb(base.image(j), SIZE, SIZE, kind, seed)?;
            let metadata = match morphometrics(&img, SIZE, SIZE) {
                Ok(m) => m.to_vec(),
                Err(_) => vec![MISSING_VALUE; Morphometrics::NAMES.len()],
            };
            let label = labels[j] as usize;
            let record = Record {
                sample_id: format!("g{j:05}-{kind}"),
                image_index: Some(row),
                text: Some(caption(label, kind)?),
                metadata,
                label,
                group_id: format!("g{j:05}"),
                tags: BTreeMap::from([
                    ("perturbation".to_string(), kind.to_string()),
                    ("split".to_string(), split.to_string()),
                ]),
            };
            Ok((img, record))
        })
        .collect::<Result<_>>()?;
    let (images, records): (Vec<Vec<u8>>, Vec<Record>) = samples.into_iter().unzip();
    let images = ImageStack::from_images(SIZE, SIZE, &images)?;
    let table = DatasetTable::from_records(toy_schema(), records, CategoryDictionary::new())?;

    let mut defs: Vec<ScenarioDef> = PerturbationKind::ALL
        .iter()
        .map(|k| scenario(k.as_str(), &format!("perturbation={k} & split=train")))
        .collect();
    for k in &PerturbationKind::ALL[1..] {
        defs.push(scenario(
            &format!("plain_{k}"),
            &format!("perturbation in {{plain, {k}}} & split=train"),
        ));
    }
    let reference = if cfg.test_per_kind > 0 {
        defs.push(scenario("test", "split=test"));
        "test"
    } else {
        "plain"
    };
    Ok(ToyDataset {
        images,
        table,
        scenarios: ScenarioConfig {
            scenarios: defs,
            reference: Some(reference.to_string()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::parse_scenarios;

    fn area(img: &[u8]) -> usize {
        foreground(img).iter().filter(|&&b| b).count()
    }

    #[test]
    fn one_glyph_per_class() {
        let (stack, labels) = base_glyphs(10, 1).unwrap();
        assert_eq!(stack.count(), 10);
        assert_eq!(labels, (0..10).collect::<Vec<u8>>());
        assert_eq!(base_glyphs(10, 1).unwrap().0, stack);
        assert_ne!(base_glyphs(10, 2).unwrap().0, stack);
    }

    #[test]
    fn glyphs_have_foreground() {
        for seed in 0..100 {
            let (stack, _) = base_glyphs(10, seed).unwrap();
            assert!(stack.images().all(|img| area(img) > 20));
        }
    }

    #[test]
    fn plain_is_identity_and_perturb_is_deterministic() {
        let (stack, _) = base_glyphs(3, 4).unwrap();
        let img = stack.image(2);
        assert_eq!(perturb(img, SIZE, SIZE, PerturbationKind::Plain, 9).unwrap(), img);
        for kind in PerturbationKind::ALL {
            assert_eq!(
                perturb(img, SIZE, SIZE, kind, 11).unwrap(),
                perturb(img, SIZE, SIZE, kind, 11).unwrap()
            );
        }
        assert!(perturb(&[0u8; SIZE * SIZE], SIZE, SIZE, PerturbationKind::Thin, 0).is_err());
    }

    #[test]
    fn area_ordering_and_fracture_bound() {
        let (stack, _) = base_glyphs(100, 5).unwrap();
        let (mut thin, mut plain, mut thick) = (0, 0, 0);
        for (i, img) in stack.images().enumerate() {
            thin += area(&perturb(img, SIZE, SIZE, PerturbationKind::Thin, i as u64).unwrap());
            plain += area(img);
            thick += area(&perturb(img, SIZE, SIZE, PerturbationKind::Thick, i as u64).unwrap());
            let f = perturb(img, SIZE, SIZE, PerturbationKind::Fracture, i as u64).unwrap();
            let changed = f.iter().zip(img).filter(|(a, b)| a != b).count();
            assert!(changed <= 60, "{changed}");
            assert!(changed > 0);
        }
        assert!(thin < plain && plain < thick);
    }

    #[test]
    fn swelling_grows_area() {
        let (stack, _) = base_glyphs(50, 6).unwrap();
        let (mut plain, mut swollen) = (0, 0);
        for (i, img) in stack.images().enumerate() {
            plain += area(img);
            swollen += area(&perturb(img, SIZE, SIZE, PerturbationKind::Swelling, i as u64).unwrap());
        }
        assert!(swollen > plain);
    }

    #[test]
    fn captions() {
        assert_eq!(
            caption(7, PerturbationKind::Plain).unwrap(),
            "Image of a handwritten plain seven"
        );
        assert_eq!(
            caption(9, PerturbationKind::Thin).unwrap(),
            "Image of a handwritten thin nine"
        );
        assert_eq!(
            caption(3, PerturbationKind::Fracture).unwrap(),
            "Image of a handwritten fractured three"
        );
        assert!(caption(10, PerturbationKind::Plain).is_err());
    }

    #[test]
    fn square_and_line_metrics() {
        let mut img = vec![0u8; 100];
        for y in 3..7 {
            for x in 2..6 {
                img[y * 10 + x] = 255;
            }
        }
        let m = morphometrics(&img, 10, 10).unwrap();
        assert_eq!((m.area, m.width, m.height), (16.0, 4.0, 4.0));

        let mut line = vec![0u8; 12 * 5];
        for x in 1..11 {
            line[2 * 12 + x] = 200;
        }
        let m = morphometrics(&line, 5, 12).unwrap();
        assert_eq!((m.length, m.thickness, m.slant), (10.0, 1.0, 0.0));
    }

    #[test]
    fn slant_sign() {
        // "/" leaning right: x grows as y shrinks
        let mut img = vec![0u8; 100];
        for k in 0..8 {
            img[(8 - k) * 10 + 1 + k] = 255;
        }
        assert!(morphometrics(&img, 10, 10).unwrap().slant > 0.0);
    }

    #[test]
    fn thickness_tracks_perturbation() {
        let (stack, _) = base_glyphs(60, 8).unwrap();
        let mean = |kind| {
            stack
                .images()
                .filter_map(|img| {
                    let p = perturb(img, SIZE, SIZE, kind, 1).unwrap();
                    morphometrics(&p, SIZE, SIZE).ok().map(|m| m.thickness)
                })
                .sum::<f64>()
                / 60.0
        };
        let (thin, plain, thick) = (
            mean(PerturbationKind::Thin),
            mean(PerturbationKind::Plain),
            mean(PerturbationKind::Thick),
        );
        assert!(thin < plain && plain < thick, "{thin} {plain} {thick}");
    }

    #[test]
    fn scenario_cardinality() {
        let toy = build_scenarios(20, 3).unwrap();
        assert_eq!(toy.table.len(), 100);
        assert_eq!(toy.images.count(), 100);
        let sc = parse_scenarios(&toy.scenarios, &toy.table).unwrap();
        assert_eq!(sc.len(), 9);
        let plain = sc.iter().find(|s| s.name == "plain").unwrap();
        for s in &sc {
            if s.name.starts_with("plain_") {
                assert_eq!(s.indices.len(), 40);
                assert!(plain.indices.iter().all(|i| s.indices.contains(i)));
            } else {
                assert_eq!(s.indices.len(), 20);
            }
        }
        assert!(build_scenarios(9, 3).is_err());
    }

    #[test]
    fn test_pool_adds_reference() {
        let toy = build_toy(&ToyConfig {
            n_per_kind: 10,
            test_per_kind: 5,
            seed: 1,
        })
        .unwrap();
        assert_eq!(toy.table.len(), 55);
        assert_eq!(toy.scenarios.reference.as_deref(), Some("test"));
        let sc = parse_scenarios(&toy.scenarios, &toy.table).unwrap();
        assert_eq!(sc.len(), 10);
    }

    #[test]
    fn external_base_stack_matches_synthetic_path() {
        let cfg = ToyConfig {
            n_per_kind: 10,
            test_per_kind: 2,
            seed: 4,
        };
        let (base, labels) = base_glyphs(12, 4).unwrap();
        let a = build_toy(&cfg).unwrap();
        let b = build_toy_from(&base, &labels, &cfg).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.table.records(), b.table.records());
        assert!(build_toy_from(&base, &labels[..5], &cfg).is_err());
    }
}
