use owapool::harness::{delta_percent, format_delta};
use owapool::layouts::{build_layout, parameter_count, LayoutName};
use owapool::nn::{checkpoint, FeatureShape, Network, Tensor};
use owapool::quantifiers::Quantifier;

/// Trainable scalars of a 3x3 convolution and of a dense layer.
fn conv(cin: usize, cout: usize) -> usize {
    cout * cin * 9 + cout
}

fn fc(inputs: usize, outputs: usize) -> usize {
    inputs * outputs + outputs
}

#[test]
fn parameter_counts_by_hand() {
    let q = Quantifier::Most;
    let m3 = build_layout(LayoutName::Model3, q, 140, 4, 6).unwrap();
    // three convolutions, then a 2x1 pool: 128 x 70 x 4 features
    let expected = conv(1, 128) + 2 * conv(128, 128) + fc(128 * 70 * 4, 300) + fc(300, 6);
    assert_eq!(expected, 11_050_554);
    assert_eq!(parameter_count(&m3), expected);

    let m7 = build_layout(LayoutName::Model7, q, 140, 4, 6).unwrap();
    let expected = conv(1, 64) + conv(64, 64) + conv(64, 128) + fc(128 * 35 * 2, 300) + fc(300, 6);
    assert_eq!(parameter_count(&m7), expected);

    let le = build_layout(LayoutName::Lenet5, q, 140, 4, 6).unwrap();
    let expected = conv(1, 6) + conv(6, 16) + fc(16 * 35, 120) + fc(120, 84) + fc(84, 6);
    assert_eq!(parameter_count(&le), expected);

    let net = Network::new(&m7, 0).unwrap();
    assert_eq!(net.parameter_count(), parameter_count(&m7));
}

#[test]
fn model7_shape_law() {
    for v in 4..40 {
        for s in 2..9 {
            let layout = build_layout(LayoutName::Model7, Quantifier::AtLeastHalf, v, s, 6).unwrap();
            let flat = layout
                .shapes()
                .into_iter()
                .find_map(|sh| match sh {
                    FeatureShape::Flat(n) => Some(n),
                    FeatureShape::Map { .. } => None,
                })
                .unwrap();
            assert_eq!(flat, 128 * (v / 2 / 2) * (s / 2), "V={v} S={s}");
            assert_eq!(*layout.shapes().last().unwrap(), FeatureShape::Flat(6));
        }
    }
    assert!(build_layout(LayoutName::Model7, Quantifier::Most, 3, 4, 6).is_err());
    assert!(build_layout(LayoutName::Model7, Quantifier::Most, 4, 1, 6).is_err());
}

#[test]
fn layout_descriptions() {
    let m7 = build_layout(LayoutName::Model7, Quantifier::Most, 140, 4, 6).unwrap();
    assert_eq!(
        m7.describe(),
        "Conv(64)-Conv(64)-OWAPoolMost(2 × 2)-Conv(128)-OWAPoolMost(2 × 1)-FC(300)-FC(6)"
    );
    let le = build_layout(LayoutName::Lenet5, Quantifier::ThereExists, 140, 4, 6).unwrap();
    assert_eq!(
        le.describe(),
        "Conv(6)-MaxPool(2 × 2)-Conv(16)-MaxPool(2 × 2)-FC(120)-FC(84)-FC(6)"
    );
    let err = build_layout(LayoutName::Lenet5, Quantifier::Average, 1, 4, 6)
        .unwrap_err()
        .to_string();
    assert!(err.contains("stage 2"), "{err}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let q = Quantifier::AtMiddle { alpha: 0.2 };
    let layout = build_layout(LayoutName::Model7, q, 12, 4, 6).unwrap();
    let net = Network::new(&layout, 42).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&net, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, net);
    for (a, b) in back.parameters().iter().zip(net.parameters()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let input = Tensor::new(vec![3, 1, 12, 4], (0..144).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    assert_eq!(back.forward(&input).unwrap(), net.forward(&input).unwrap());
    assert_eq!(back.layout().quantifier(), q);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 1);
    assert!(checkpoint::from_bytes(&bytes).is_err());
}

#[test]
fn delta_formatting_examples() {
    // (baseline, candidate, expected delta) for accuracy, precision, recall and F1
    let baseline = [0.91, 0.84, 0.84, 0.83];
    let rows: [([f64; 4], [&str; 4]); 5] = [
        ([0.91, 0.91, 0.85, 0.85], ["0.00", "8.33", "1.19", "2.41"]),
        ([0.93, 0.91, 0.88, 0.89], ["2.20", "8.33", "4.76", "7.23"]),
        ([0.94, 0.94, 0.91, 0.92], ["3.30", "11.90", "8.33", "10.84"]),
        ([0.92, 0.90, 0.86, 0.86], ["1.10", "7.14", "2.38", "3.61"]),
        ([0.93, 0.90, 0.87, 0.88], ["2.20", "7.14", "3.57", "6.02"]),
    ];
    for (values, expected) in rows {
        for k in 0..4 {
            let d = delta_percent(baseline[k], values[k]).unwrap();
            assert_eq!(format_delta(d), expected[k], "{} -> {}", baseline[k], values[k]);
        }
    }
}
