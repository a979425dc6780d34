mod common;

use common::{config, random_tensor};
use lcnn_core::graph::LayerSpec;
use lcnn_core::ssd::{generate_priors, iou, nms, CornerBox, Detection, PriorBox, PERSON_CLASS};
use lcnn_core::weights::{random_init, zero_init, SplitMix64};
use lcnn_core::{build_lcnn_default, detect, Detector, HeadSpec};

#[test]
fn default_network_has_8232_priors() {
    let cfg = build_lcnn_default();
    let store = zero_init(&cfg, &HeadSpec::default()).unwrap();
    let det = Detector::new(&cfg, &store, &HeadSpec::default()).unwrap();
    assert_eq!(det.priors().len(), 6 * (28 * 28 + 3 * 14 * 14));
    assert_eq!(det.priors().len(), 8232);
}

#[test]
fn uniform_scores_yield_nothing() {
    let cfg = build_lcnn_default();
    let head = HeadSpec::default();
    let store = zero_init(&cfg, &head).unwrap();
    let frame = random_tensor(&mut SplitMix64::new(1), 3, 224, 224);
    assert!(detect(&cfg, &store, &head, &frame).unwrap().is_empty());
    let mut all = head.clone();
    all.all_classes = true;
    assert!(detect(&cfg, &store, &all, &frame).unwrap().is_empty());
}

/// A 3x3 input reduced to a single 1x1 tap: six default boxes, one cell.
fn one_cell_detector(boost_prior: usize, boost_class: usize) -> (Detector, Vec<PriorBox>) {
    let cfg = config(
        3,
        3,
        vec![LayerSpec::conventional(1, 8, 3, 1).with_padding(0)],
        &[1],
    );
    let head = HeadSpec::for_tap_count(1);
    let mut store = zero_init(&cfg, &head).unwrap();
    let mut bias = vec![0.0f32; 6 * 21];
    bias[boost_prior * 21 + boost_class] = 10.0;
    store.replace("head1.conf.bias", bias).unwrap();
    let priors = generate_priors(&[(1, 1)], &head).unwrap();
    (Detector::new(&cfg, &store, &head).unwrap(), priors)
}

#[test]
fn boosted_prior_is_detected_at_its_default_box() {
    let (det, priors) = one_cell_detector(2, PERSON_CLASS);
    let frame = random_tensor(&mut SplitMix64::new(2), 3, 3, 3);
    let out = det.detect(&frame).unwrap();
    assert_eq!(out.len(), 1);
    let d = out[0];
    assert_eq!(d.class_id, PERSON_CLASS);
    assert_eq!(d.prior_index, 2);
    let e10 = 10f64.exp();
    assert!((d.score as f64 - e10 / (e10 + 20.0)).abs() < 1e-6);
    assert_eq!(d.bbox, CornerBox::from_prior(&priors[2]).clipped());
}

#[test]
fn person_filter_and_all_classes() {
    let (det, _) = one_cell_detector(0, 7);
    let frame = random_tensor(&mut SplitMix64::new(3), 3, 3, 3);
    assert!(det.detect(&frame).unwrap().is_empty());

    let cfg = det.network().config().clone();
    let mut head = det.head().clone();
    head.all_classes = true;
    let mut store = zero_init(&cfg, &head).unwrap();
    let mut bias = vec![0.0f32; 6 * 21];
    bias[7] = 10.0;
    store.replace("head1.conf.bias", bias).unwrap();
    let out = detect(&cfg, &store, &head, &frame).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].class_id, 7);
}

#[test]
fn missing_head_weights_are_load_errors() {
    let cfg = build_lcnn_default();
    let head = HeadSpec::default();
    let full = zero_init(&cfg, &head).unwrap();
    let mut store = lcnn_core::WeightStore::new();
    for (name, a) in full.iter() {
        if name != "head15.conf.weight" {
            store
                .insert(name, a.dims().to_vec(), a.data().to_vec())
                .unwrap();
        }
    }
    let err = Detector::new(&cfg, &store, &head).unwrap_err();
    assert!(
        matches!(&err, lcnn_core::Error::Load(m) if m.contains("head15.conf.weight")),
        "{err}"
    );
}

#[test]
fn random_weights_respect_output_invariants() {
    let cfg = build_lcnn_default();
    let head = HeadSpec {
        all_classes: true,
        confidence_threshold: 0.05,
        top_k: 50,
        ..HeadSpec::default()
    };
    let store = random_init(&cfg, &head, 42).unwrap();
    let det = Detector::new(&cfg, &store, &head).unwrap();
    let frame = random_tensor(&mut SplitMix64::new(4), 3, 224, 224);
    let out = det.detect(&frame).unwrap();
    assert!(out.len() <= 50);
    for d in &out {
        assert!(d.class_id >= 1 && d.class_id < 21);
        assert!(d.score >= 0.05 && d.score <= 1.0);
        let b = d.bbox;
        assert!(b.is_valid());
        assert!([b.xmin, b.ymin, b.xmax, b.ymax]
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
    for (i, a) in out.iter().enumerate() {
        for b in &out[i + 1..] {
            if a.class_id == b.class_id {
                assert!(iou(&a.bbox, &b.bbox) < head.nms_iou_threshold);
            }
        }
    }
    assert_eq!(det.detect(&frame).unwrap(), out);
}

fn random_candidates(rng: &mut SplitMix64, n: usize) -> Vec<Detection> {
    (0..n)
        .map(|i| {
            // coarse grid so overlaps near the threshold are common
            let q = |rng: &mut SplitMix64| (rng.next_u64() % 6) as f32 * 0.1;
            let (x, y) = (q(rng), q(rng));
            let (w, h) = (0.1 + q(rng), 0.1 + q(rng));
            Detection {
                class_id: 1 + (rng.next_u64() % 2) as usize,
                score: 0.5 + (rng.next_u64() % 5) as f32 * 0.1,
                bbox: CornerBox::new(x, y, x + w, y + h),
                prior_index: i,
            }
        })
        .collect()
}

fn outranks(a: &Detection, b: &Detection) -> bool {
    a.score > b.score || (a.score == b.score && a.prior_index < b.prior_index)
}

/// Every subset that is a fixed point of "keep a box iff no kept,
/// higher-ranked box of its class overlaps it at or above the threshold".
fn stable_subsets(c: &[Detection], thr: f32) -> Vec<Vec<usize>> {
    let n = c.len();
    (0u32..1 << n)
        .filter(|&mask| {
            (0..n).all(|i| {
                let blocked = (0..n).any(|j| {
                    mask & (1 << j) != 0
                        && c[j].class_id == c[i].class_id
                        && outranks(&c[j], &c[i])
                        && iou(&c[j].bbox, &c[i].bbox) >= thr
                });
                (mask & (1 << i) != 0) == !blocked
            })
        })
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

#[test]
fn nms_equals_exhaustive_reference() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..1000 {
        let n = 1 + (rng.next_u64() % 6) as usize;
        let cands = random_candidates(&mut rng, n);
        let fixed = stable_subsets(&cands, 0.45);
        assert_eq!(
            fixed.len(),
            1,
            "ranking is strict so the fixed point is unique"
        );
        let mut want: Vec<usize> = fixed[0].iter().map(|&i| cands[i].prior_index).collect();
        want.sort();

        let mut shuffled = cands.clone();
        shuffled.rotate_left(n / 2);
        shuffled.reverse();
        for input in [cands.clone(), shuffled] {
            let mut got: Vec<usize> = nms(input, 0.45, 100)
                .iter()
                .map(|d| d.prior_index)
                .collect();
            got.sort();
            assert_eq!(got, want);
        }
    }
}

#[test]
fn nms_output_is_pairwise_separated_subset() {
    let mut rng = SplitMix64::new(5);
    for _ in 0..200 {
        let cands = random_candidates(&mut rng, 12);
        let out = nms(cands.clone(), 0.3, 5);
        assert!(out.len() <= 5);
        for d in &out {
            assert!(cands.contains(d));
        }
        for (i, a) in out.iter().enumerate() {
            for b in &out[i + 1..] {
                assert!(a.class_id != b.class_id || iou(&a.bbox, &b.bbox) < 0.3);
            }
        }
    }
}
