use criterion::{criterion_group, criterion_main, Criterion};
use dynkp_bench::person_and_box_pair;
use dynkp_core::features::{detect_and_describe, hamming_distance, match_nearest_neighbor, DetectorParams, MatchParams};
use dynkp_core::filter::FrameView;
use dynkp_core::geometry::{estimate_fundamental_ransac, RansacParams};
use dynkp_core::{filter_frame_pair, Correspondence, FilterConfig};
use image::{GrayImage, Luma};
use std::hint::black_box;

fn matching(c: &mut Criterion) {
    let seq = person_and_box_pair();
    let (a, b) = (&seq.frames[0].features, &seq.frames[1].features);
    c.bench_function("hamming_distance", |bench| {
        bench.iter(|| hamming_distance(black_box(&a.descriptors[0]), black_box(&b.descriptors[1])))
    });
    c.bench_function("match_nearest_neighbor", |bench| {
        bench.iter(|| match_nearest_neighbor(black_box(a), black_box(b), &MatchParams::default()).unwrap())
    });
}

fn ransac(c: &mut Criterion) {
    let seq = person_and_box_pair();
    let (a, b) = (&seq.frames[0], &seq.frames[1]);
    let pairs: Vec<Correspondence> = b
        .gt_matches
        .iter()
        .map(|&(i, j)| Correspondence::new(a.features.keypoints[i].position, b.features.keypoints[j].position))
        .collect();
    let params = RansacParams::default();
    c.bench_function("fundamental_ransac", |bench| {
        bench.iter(|| estimate_fundamental_ransac(black_box(&pairs), &params).unwrap())
    });
}

fn filtering(c: &mut Criterion) {
    let seq = person_and_box_pair();
    let (a, b) = (&seq.frames[0], &seq.frames[1]);
    let config = FilterConfig { epipolar_threshold: 1.5, ..Default::default() };
    c.bench_function("filter_frame_pair", |bench| {
        bench.iter(|| {
            filter_frame_pair(
                FrameView { features: &a.features, panoptic: &a.panoptic },
                FrameView { features: &b.features, panoptic: &b.panoptic },
                &config,
            )
            .unwrap()
        })
    });
}

fn detection(c: &mut Criterion) {
    let image = GrayImage::from_fn(640, 480, |x, y| {
        let board = if (x / 32 + y / 32) % 2 == 0 { 40 } else { 210 };
        Luma([(board + (x * 7 + y * 13) % 23) as u8])
    });
    let params = DetectorParams::default();
    c.bench_function("detect_and_describe_640x480", |bench| {
        bench.iter(|| detect_and_describe(black_box(&image), &params).unwrap())
    });
}

criterion_group!(benches, matching, ransac, filtering, detection);
criterion_main!(benches);
