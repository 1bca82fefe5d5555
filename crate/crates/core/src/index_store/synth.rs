//! Seeded synthetic datasets standing in for rendered, segmented model views.
//!
//! Each category is a template of rectangular or elliptical parts placed in
//! distinct cells of a 3×3 canvas grid. Categories in the same layout family
//! share part placements and differ in part shape. Models move and rescale
//! each template part, views add small per-part jitter and a slight global
//! rotation, and queries are drawn from the template with heavier jitter.
//! Optional scrambled distractors keep a model's part shapes but permute
//! where they sit, so they look alike locally and differ globally.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};
use crate::sketch_model::{SegmentedSketch, SemanticPart, Stroke, DEFAULT_CANVAS_SIDE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_categories: usize,
    /// Inclusive range of parts per category template.
    pub parts_per_template: (usize, usize),
    /// Template part size range, in units of a third of the canvas.
    pub part_size: (f64, f64),
    pub models_per_category: usize,
    pub views_per_model: usize,
    pub queries_per_category: usize,
    /// Per-part center jitter of a model relative to its template, pixels.
    pub model_jitter: f64,
    /// Per-part center jitter of a view relative to its model, pixels.
    pub view_jitter: f64,
    /// Per-part center jitter of a query relative to the template, pixels.
    pub query_jitter: f64,
    /// Maximum global view rotation, degrees.
    pub view_rotation_deg: f64,
    /// Per-part size factor range for models and queries.
    pub scale_range: (f64, f64),
    /// Pen noise amplitude for query strokes, pixels.
    pub query_noise: f64,
    /// Probability that a query omits a (non-final) part.
    pub part_drop_prob: f64,
    /// One scrambled copy of each category's first model.
    pub scrambled_distractors: bool,
    /// Categories sharing part placements, round robin; 0 gives every
    /// category its own placement.
    pub layout_families: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_categories: 19,
            parts_per_template: (4, 6),
            part_size: (0.35, 0.6),
            models_per_category: 20,
            views_per_model: 42,
            queries_per_category: 5,
            model_jitter: 10.0,
            view_jitter: 3.0,
            query_jitter: 12.0,
            view_rotation_deg: 4.0,
            scale_range: (0.65, 1.35),
            query_noise: 1.5,
            part_drop_prob: 0.0,
            scrambled_distractors: true,
            layout_families: 6,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub views: Vec<SegmentedSketch>,
    pub queries: Vec<SegmentedSketch>,
    /// `(distractor model id, source model id)`.
    pub distractors: Vec<(String, String)>,
}

/// Category label given to the distractor built from category `category`.
pub fn scrambled_category(category: &str) -> String {
    format!("{category}~scrambled")
}

pub fn category_name(i: usize) -> String {
    format!("c{i:02}")
}

pub fn model_name(category: usize, model: usize) -> String {
    format!("c{category:02}-m{model:02}")
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Rect,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq)]
struct PartShape {
    kind: Kind,
    center: Point,
    /// Longer side before rotation.
    size: f64,
    aspect: f64,
    angle: f64,
    /// 1 or 2 strokes.
    pieces: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for a `(seed, path...)` key.
fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let key = path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)));
    ChaCha8Rng::seed_from_u64(key)
}

fn template(
    placement: &mut ChaCha8Rng,
    shape: &mut ChaCha8Rng,
    canvas: f64,
    parts: (usize, usize),
    size: (f64, f64),
) -> Vec<PartShape> {
    let cell = canvas / 3.0;
    let n = placement.gen_range(parts.0.clamp(1, 9)..=parts.1.clamp(parts.0.clamp(1, 9), 9));
    let mut cells: Vec<usize> = (0..9).collect();
    cells.shuffle(placement);
    cells[..n]
        .iter()
        .map(|&c| {
            let (cx, cy) = ((c % 3) as f64 + 0.5, (c / 3) as f64 + 0.5);
            let center = Point::new(
                cx * cell + placement.gen_range(-0.1..0.1) * cell,
                cy * cell + placement.gen_range(-0.1..0.1) * cell,
            );
            PartShape {
                kind: if shape.gen_bool(0.5) { Kind::Rect } else { Kind::Ellipse },
                center,
                size: shape.gen_range(size.0..=size.1) * cell,
                aspect: shape.gen_range(0.3..1.0),
                angle: shape.gen_range(0.0..std::f64::consts::PI),
                pieces: shape.gen_range(1..=2),
            }
        })
        .collect()
}

fn perturb(parts: &[PartShape], rng: &mut ChaCha8Rng, jitter: f64, scale: (f64, f64), angle_deg: f64) -> Vec<PartShape> {
    parts
        .iter()
        .map(|p| {
            let mut q = p.clone();
            if jitter > 0.0 {
                q.center.x += rng.gen_range(-jitter..=jitter);
                q.center.y += rng.gen_range(-jitter..=jitter);
            }
            if scale.1 > scale.0 {
                q.size *= rng.gen_range(scale.0..=scale.1);
            }
            q.aspect = (q.aspect * rng.gen_range(0.9..=1.1)).min(1.0);
            if angle_deg > 0.0 {
                q.angle += rng.gen_range(-angle_deg..=angle_deg).to_radians();
            }
            q
        })
        .collect()
}

/// Closed outline sampled roughly every 6 pixels.
fn outline(p: &PartShape) -> Vec<Point> {
    let (w, h) = (0.5 * p.size, 0.5 * p.size * p.aspect);
    let local: Vec<(f64, f64)> = match p.kind {
        Kind::Ellipse => {
            let n = ((std::f64::consts::PI * (w + h)) / 6.0).ceil().max(16.0) as usize;
            (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64 * std::f64::consts::TAU;
                    (w * t.cos(), h * t.sin())
                })
                .collect()
        }
        Kind::Rect => {
            let corners = [(-w, -h), (w, -h), (w, h), (-w, h), (-w, -h)];
            let mut pts = Vec::new();
            for c in corners.windows(2) {
                let (a, b) = (c[0], c[1]);
                let len = (b.0 - a.0).hypot(b.1 - a.1);
                let n = (len / 6.0).ceil().max(1.0) as usize;
                for i in 0..n {
                    let t = i as f64 / n as f64;
                    pts.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
                }
            }
            pts.push(corners[4]);
            pts
        }
    };
    let (s, c) = p.angle.sin_cos();
    local
        .into_iter()
        .map(|(x, y)| Point::new(p.center.x + x * c - y * s, p.center.y + x * s + y * c))
        .collect()
}

fn rotate_about(p: Point, center: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    Point::new(center.x + dx * c - dy * s, center.y + dx * s + dy * c)
}

fn render(
    parts: &[PartShape],
    canvas: f64,
    rotation: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> SegmentedSketch {
    let center = Point::new(0.5 * canvas, 0.5 * canvas);
    let mut next_stroke = 0u32;
    let mut out = Vec::with_capacity(parts.len());
    for (pid, shape) in parts.iter().enumerate() {
        let pts: Vec<Point> = outline(shape)
            .into_iter()
            .map(|p| {
                let mut q = rotate_about(p, center, rotation);
                if noise > 0.0 {
                    q.x += rng.gen_range(-noise..=noise);
                    q.y += rng.gen_range(-noise..=noise);
                }
                q
            })
            .collect();
        let pieces: Vec<&[Point]> = if shape.pieces == 2 && pts.len() >= 6 {
            let mid = pts.len() / 2;
            vec![&pts[..=mid], &pts[mid..]]
        } else {
            vec![&pts[..]]
        };
        let strokes: Vec<Stroke> = pieces
            .into_iter()
            .filter_map(|piece| {
                let s = Stroke::new(next_stroke, piece.iter().copied()).ok()?;
                next_stroke += 1;
                Some(s)
            })
            .collect();
        if let Ok(part) = SemanticPart::new(pid as u32, strokes) {
            out.push(part);
        }
    }
    SegmentedSketch::new(canvas, out).expect("generated ids are unique")
}

/// Swaps part centers along a random cycle so that every part moves.
fn scramble(parts: &[PartShape], rng: &mut ChaCha8Rng) -> Vec<PartShape> {
    let n = parts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = parts.to_vec();
    for i in 0..n {
        let from = order[i];
        let to = order[(i + 1) % n];
        out[to].center = parts[from].center;
    }
    out
}

pub fn generate_synthetic(spec: &SynthSpec) -> SynthDataset {
    let canvas = DEFAULT_CANVAS_SIDE;
    let mut views = Vec::new();
    let mut queries = Vec::new();
    let mut distractors = Vec::new();
    let view_docs = |model: &[PartShape], cat: &str, model_id: &str, key: &[u64], views: &mut Vec<SegmentedSketch>| {
        for v in 0..spec.views_per_model {
            let mut path = key.to_vec();
            path.push(v as u64);
            let mut rng = stream(spec.seed, &path);
            let jittered = perturb(model, &mut rng, spec.view_jitter, (1.0, 1.0), 0.0);
            let rot = if spec.view_rotation_deg > 0.0 {
                rng.gen_range(-spec.view_rotation_deg..=spec.view_rotation_deg).to_radians()
            } else {
                0.0
            };
            let doc = render(&jittered, canvas, rot, 0.0, &mut rng).with_labels(
                Some(cat.to_string()),
                Some(model_id.to_string()),
                Some(v as u32),
            );
            views.push(doc);
        }
    };
    for c in 0..spec.n_categories {
        let cat = category_name(c);
        let family = match spec.layout_families {
            0 => c,
            f => c % f,
        };
        let tmpl = template(
            &mut stream(spec.seed, &[0, family as u64]),
            &mut stream(spec.seed, &[7, c as u64]),
            canvas,
            spec.parts_per_template,
            spec.part_size,
        );
        let mut first_model = None;
        for m in 0..spec.models_per_category {
            let mut rng = stream(spec.seed, &[1, c as u64, m as u64]);
            let model = perturb(&tmpl, &mut rng, spec.model_jitter, spec.scale_range, 5.0);
            view_docs(&model, &cat, &model_name(c, m), &[2, c as u64, m as u64], &mut views);
            if m == 0 {
                first_model = Some(model);
            }
        }
        if spec.scrambled_distractors {
            if let Some(source) = first_model {
                let mut rng = stream(spec.seed, &[3, c as u64]);
                let scrambled = scramble(&source, &mut rng);
                let id = format!("c{c:02}-scr");
                view_docs(&scrambled, &scrambled_category(&cat), &id, &[4, c as u64], &mut views);
                distractors.push((id, model_name(c, 0)));
            }
        }
        for q in 0..spec.queries_per_category {
            let mut rng = stream(spec.seed, &[5, c as u64, q as u64]);
            let mut parts = perturb(&tmpl, &mut rng, spec.query_jitter, spec.scale_range, 10.0);
            if spec.part_drop_prob > 0.0 {
                let mut kept: Vec<PartShape> = Vec::new();
                let n = parts.len();
                for (i, p) in parts.into_iter().enumerate() {
                    let last_chance = kept.is_empty() && i == n - 1;
                    if last_chance || !rng.gen_bool(spec.part_drop_prob) {
                        kept.push(p);
                    }
                }
                parts = kept;
            }
            let doc = render(&parts, canvas, 0.0, spec.query_noise, &mut rng).with_labels(Some(cat.clone()), None, None);
            queries.push(doc);
        }
    }
    SynthDataset {
        views,
        queries,
        distractors,
    }
}

/// Partial query: deletes a random fraction in `drop_range` of the parts
/// (at least one deleted, at least one kept) and returns the full query's
/// bounding box as the placement box.
pub fn make_partial(query: &SegmentedSketch, drop_range: (f64, f64), seed: u64) -> Option<(SegmentedSketch, Rect)> {
    let n = query.parts().len();
    if n < 2 {
        return None;
    }
    let bbox = query.bbox()?;
    let mut rng = stream(seed, &[6, n as u64]);
    let frac = if drop_range.1 > drop_range.0 {
        rng.gen_range(drop_range.0..=drop_range.1)
    } else {
        drop_range.0
    };
    let drop = ((frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut ids: Vec<u32> = query.parts().iter().map(SemanticPart::id).collect();
    ids.shuffle(&mut rng);
    let dropped: Vec<u32> = ids[..drop].to_vec();
    Some((query.retain_parts(|p| !dropped.contains(&p.id())), bbox))
}
