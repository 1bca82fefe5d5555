//! Worked examples exercised through the public API.

mod support;

use partpyr_core::baselines::{extract_gf, BaselineError};
use partpyr_core::descriptor::{ExtractionConfig, Extractor, Variant};
use partpyr_core::gabor::{rasterize_group, FilterBank, GaborParams, RasterOptions};
use partpyr_core::geometry::{Point, Rect};
use partpyr_core::index_store::synth::{generate_synthetic, SynthSpec};
use partpyr_core::index_store::{build_index, IndexError};
use partpyr_core::matching::{knn, DistanceOptions, MatchMode};
use partpyr_core::pyramid::{build_layout, Scheme};
use partpyr_core::sketch_model::{normalize, RawInput, SegmentedSketch, Stroke};

use support::{part, sketch};

fn pts(v: &[(f64, f64)]) -> Vec<Point> {
    v.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn square_outline(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    pts(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)])
}

fn extractor() -> Extractor {
    Extractor::new(ExtractionConfig::default()).unwrap()
}

#[test]
fn part_inside_one_cell_fills_exactly_the_regions_containing_it() {
    let bbox = Rect::new(225.0, 225.0, 260.0, 260.0);
    let s = sketch(320.0, vec![part(0, vec![square_outline(225.0, 225.0, 260.0, 260.0)])]);
    let ex = extractor();
    let f = ex.extract_full(&s).unwrap();
    let layout = build_layout(&Scheme::SixOverlapping, 320.0).unwrap();
    for (r, &empty) in layout.regions.iter().zip(&f.empty_flags) {
        assert_eq!(!empty, r.rect.contains_rect(&bbox), "region {}", r.id);
    }
    assert!(!f.empty_flags[8]);
    assert!(!f.empty_flags[layout.top_index()]);
}

#[test]
fn single_stroke_stk_equals_full() {
    let line = pts(&[(30.0, 40.0), (120.0, 200.0), (250.0, 180.0)]);
    let ex = extractor();
    let raw = RawInput::new(vec![Stroke::new(0, line.clone()).unwrap()]);
    let stk = ex.extract_stk(&raw, MatchMode::Full).unwrap();
    let s = normalize(&sketch(320.0, vec![part(0, vec![line])]), MatchMode::Full, None).unwrap();
    let full = ex.extract_full(&s).unwrap();
    assert_eq!(stk, full);
}

#[test]
fn stroke_grouping_splits_a_part_that_full_keeps_together() {
    let frame = part(0, vec![square_outline(0.0, 0.0, 320.0, 320.0)]);
    let split = part(
        1,
        vec![square_outline(20.0, 20.0, 80.0, 80.0), square_outline(130.0, 20.0, 190.0, 80.0)],
    );
    let s = sketch(320.0, vec![frame, split]);
    let ex = extractor();
    let full = ex.extract_full(&s).unwrap();
    assert!(full.empty_flags[0] && full.empty_flags[1]);

    let raw = RawInput::new(s.strokes().cloned().collect());
    let stk = ex.extract_stk(&raw, MatchMode::Full).unwrap();
    assert!(!stk.empty_flags[0] && !stk.empty_flags[1]);
}

#[test]
fn l_shaped_group_lit_count() {
    let p = part(0, vec![pts(&[(0.0, 0.0), (0.0, 100.0)]), pts(&[(0.0, 100.0), (100.0, 100.0)])]);
    let opts = RasterOptions::default();
    let img = rasterize_group(&[&p], &opts).unwrap();
    let scale = (opts.raster_side as f64 - 2.0 * opts.margin) / 100.0;
    let estimate = 200.0 * scale * opts.stroke_width;
    let lit = img.lit_count() as f64;
    assert!((lit - estimate).abs() <= 0.1 * estimate, "lit {lit}, estimate {estimate}");
    let side = opts.raster_side;
    let m = opts.margin as usize;
    assert_eq!(img.get(m, side / 2), 1, "vertical arm");
    assert_eq!(img.get(side / 2, side - m - 1), 1, "horizontal arm");
}

#[test]
fn global_feature_length_and_empty_input() {
    let bank = FilterBank::new(&GaborParams::default(), 128).unwrap();
    let s = sketch(320.0, vec![part(0, vec![square_outline(10.0, 10.0, 300.0, 200.0)])]);
    assert_eq!(extract_gf(&s, &bank, &RasterOptions::default(), true).unwrap().len(), 216);
    let empty = SegmentedSketch::new(320.0, Vec::new());
    if let Ok(empty) = empty {
        assert!(matches!(
            extract_gf(&empty, &bank, &RasterOptions::default(), true),
            Err(BaselineError::EmptyInput)
        ));
    }
}

fn views(models: usize, per_model: usize) -> Vec<SegmentedSketch> {
    generate_synthetic(&SynthSpec {
        n_categories: 1,
        models_per_category: models,
        views_per_model: per_model,
        queries_per_category: 1,
        scrambled_distractors: false,
        ..SynthSpec::default()
    })
    .views
}

#[test]
fn index_build_counts_and_rejections() {
    let ex = extractor();
    let v = views(2, 3);
    let index = build_index(&v, &ex, Variant::Full).unwrap();
    assert_eq!(index.records.len(), 6);

    let mut dup = v.clone();
    dup.push(v[0].clone());
    assert!(matches!(build_index(&dup, &ex, Variant::Full), Err(IndexError::DuplicateRecord(_, _))));

    let mut mixed = v.clone();
    let odd = SegmentedSketch::new(400.0, v[1].parts().to_vec())
        .unwrap()
        .with_labels(Some("c00".into()), Some("m-odd".into()), Some(0));
    mixed.push(odd);
    assert!(matches!(build_index(&mixed, &ex, Variant::Full), Err(IndexError::CanvasMismatch { .. })));

    assert!(matches!(build_index(&v, &ex, Variant::Stk), Err(IndexError::UnsupportedVariant(_))));
}

#[test]
fn knn_with_large_k_returns_every_model() {
    let ex = extractor();
    let v = views(3, 2);
    let index = build_index(&v, &ex, Variant::Full).unwrap();
    let q = ex.prepare(&v[2], MatchMode::Full, None, Variant::Full).unwrap();
    let ranked = knn(&q, &index, 50, &DistanceOptions::new(MatchMode::Full)).unwrap();
    assert_eq!(ranked.len(), 3);
    assert_eq!(Some(&ranked[0].model_id), v[2].model_id.as_ref());
    assert_eq!(ranked[0].distance, 0.0);
}

#[test]
fn cross_scheme_query_is_rejected() {
    let ex = extractor();
    let v = views(1, 2);
    let index = build_index(&v, &ex, Variant::Full).unwrap();
    let other = Extractor::new(ExtractionConfig {
        scheme: Scheme::FourNonOverlapping,
        ..ExtractionConfig::default()
    })
    .unwrap();
    let q = other.prepare(&v[0], MatchMode::Full, None, Variant::Full).unwrap();
    assert!(knn(&q, &index, 1, &DistanceOptions::new(MatchMode::Full)).is_err());
}
