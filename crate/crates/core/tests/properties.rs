use magnav::geometry::Pose2;
use magnav::loopclosure::{chi2_threshold, combined_distance, extract_candidates, gate_statistic};
use magnav::magnetostatics::{invariants, unvdash, vdash, FieldSample, InvariantTriple, Vector5};
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

fn triple() -> impl Strategy<Value = InvariantTriple> {
    (1.0f64..80.0, 0.0f64..60.0, -500.0f64..500.0).prop_map(|(i1, i2, i3)| InvariantTriple { i1, i2, i3 })
}

proptest! {
    #[test]
    fn invariants_ignore_attitude(
        b in prop::array::uniform3(-60.0f64..60.0),
        g in prop::array::uniform5(-40.0f64..40.0),
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.1f64..3.1,
    ) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let c = *Rotation3::from_scaled_axis(axis.normalize() * angle).matrix();
        let g = unvdash(&Vector5::from(g));
        let s = FieldSample { timestamp: 0.0, field: Vector3::from(b), gradient: vdash(&g).unwrap() };
        let gr = c.transpose() * g * c;
        let r = FieldSample {
            timestamp: 0.0,
            field: c.transpose() * Vector3::from(b),
            gradient: vdash(&(0.5 * (gr + gr.transpose()))).unwrap(),
        };
        let (a, z) = (invariants(&s), invariants(&r));
        prop_assert!((a.i1 - z.i1).abs() <= 1e-12 * a.i1);
        prop_assert!((a.i2 - z.i2).abs() <= 1e-12 * a.i2.max(1e-300));
        prop_assert!((a.i3 - z.i3).abs() <= 1e-12 * a.i3.abs().max(a.i2.powi(3)).max(1e-300));
    }

    #[test]
    fn combined_distance_is_a_normalized_dissimilarity(stream in prop::collection::vec(triple(), 2..30)) {
        let d = combined_distance(&stream).unwrap();
        let k = stream.len();
        for i in 0..k {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..k {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!(d.get(i, j) >= 0.0 && d.get(i, j) <= 6.0);
            }
        }
    }

    #[test]
    fn candidates_respect_threshold_and_separation(
        stream in prop::collection::vec(triple(), 2..60),
        tau in 0.01f64..1.0,
        sep in 1usize..20,
        window in 0usize..12,
    ) {
        let d = combined_distance(&stream).unwrap();
        for c in extract_candidates(&d, tau, sep, window) {
            prop_assert!(c.j >= c.i + sep);
            prop_assert!(c.score < tau);
            prop_assert_eq!(c.score, d.get(c.i, c.j));
        }
    }

    #[test]
    fn shrinking_covariance_never_admits_a_rejected_pair(
        x in -5.0f64..5.0, y in -5.0f64..5.0, th in -1.0f64..1.0,
        diag in prop::array::uniform3(0.01f64..4.0),
        scale in 0.05f64..1.0,
    ) {
        let sigma = Matrix3::from_diagonal(&Vector3::from(diag));
        let ti = Pose2::identity();
        let tj = Pose2::new(x, y, th);
        let bound = chi2_threshold(3, 0.05);
        let wide = gate_statistic(&ti, &tj, &sigma, 0, 1).unwrap();
        let narrow = gate_statistic(&ti, &tj, &(sigma * scale), 0, 1).unwrap();
        prop_assert!(narrow >= wide * (1.0 - 1e-12));
        if wide > bound {
            prop_assert!(narrow > bound);
        }
    }
}

#[test]
fn gate_threshold_matches_chi_square_quantile() {
    assert!((chi2_threshold(3, 0.05) - 7.814727903251178).abs() < 1e-9);
}
