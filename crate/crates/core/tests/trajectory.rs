use std::f64::consts::PI;

use lagvae::error::Error;
use lagvae::rng::seeded;
use lagvae::surrogate::{default_params, generate};
use lagvae::trajectory::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn csv_round_trip_of_default_surrogate() {
    let batch = generate(&default_params()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.csv");
    save_batch(&batch, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 15 * 1100);
    assert_eq!(text.lines().next().unwrap(), "traj_id,t_index,r,theta,z");
    let back = load_batch(&path).unwrap();
    assert_eq!((back.len(), back.steps()), (15, 1100));
    for (a, b) in batch.iter().zip(back.iter()) {
        for axis in Axis::ALL {
            for (x, y) in a.series(axis).iter().zip(b.series(axis)) {
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }
    }
}

#[test]
fn csv_accepts_scientific_notation_and_rejects_bad_rows() {
    let good = "traj_id,t_index,r,theta,z\n0,0,1e0,0.0,-2.5E-1\n0,1,1.5,0.1,0\n";
    let b = read_batch(good.as_bytes(), 0.01).unwrap();
    assert_eq!(b.trajectories()[0].z(), &[-0.25, 0.0]);

    let gap = "traj_id,t_index,r,theta,z\n0,0,1,0,0\n0,2,1,0,0\n";
    assert!(read_batch(gap.as_bytes(), 0.01).is_err());
    let ragged = "traj_id,t_index,r,theta,z\n0,0,1,0,0\n0,1,1,0,0\n1,0,1,0,0\n";
    assert!(matches!(read_batch(ragged.as_bytes(), 0.01), Err(Error::RaggedBatch { .. })));
    let header = "id,t,r,theta,z\n0,0,1,0,0\n0,1,1,0,0\n";
    assert!(matches!(read_batch(header.as_bytes(), 0.01), Err(Error::Schema(_))));
    let text = "traj_id,t_index,r,theta,z\n0,0,1,0,0\n0,1,abc,0,0\n";
    assert!(matches!(read_batch(text.as_bytes(), 0.01), Err(Error::Parse { .. })));
    let negative = "traj_id,t_index,r,theta,z\n0,0,-1,0,0\n0,1,1,0,0\n";
    assert!(read_batch(negative.as_bytes(), 0.01).is_err());
}

#[test]
fn cartesian_round_trip() {
    let mut rng = seeded(8);
    for _ in 0..1000 {
        let p = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let (r, th, z) = cartesian_to_cylindrical(p.0, p.1, p.2);
        assert!(r >= 0.0 && th > -PI && th <= PI);
        let q = cylindrical_to_cartesian(r, th, z).unwrap();
        assert!((p.0 - q.0).abs() < 1e-12 && (p.1 - q.1).abs() < 1e-12 && (p.2 - q.2).abs() < 1e-12);
    }
    assert_eq!(cartesian_to_cylindrical(0.0, 0.0, 1.0), (0.0, 0.0, 1.0));
    assert!(cylindrical_to_cartesian(-1.0, 0.0, 0.0).is_err());
}

#[test]
fn unwrapping_circular_motion_accumulates() {
    let n = 400;
    let pts: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let a = 0.1 * i as f64;
            (2.0 * a.cos(), 2.0 * a.sin(), 0.0)
        })
        .collect();
    let t = Trajectory::from_cartesian(&pts, 0.01).unwrap();
    for (i, th) in t.theta().iter().enumerate() {
        assert!((th - 0.1 * i as f64).abs() < 1e-9);
    }
}

#[test]
fn normalization_moments_and_inverse() {
    let batch = generate(&default_params()).unwrap();
    let (x, stats) = normalize(&batch).unwrap();
    for c in 0..3 {
        let vals: Vec<f64> = (0..x.batch()).flat_map(|i| x.row(i, c).to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-10, "{c}: {mean}");
        assert!((var - 1.0).abs() < 1e-10);
    }
    let back = denormalize(&x, &stats).unwrap();
    for (a, b) in batch.iter().zip(back.iter()) {
        for axis in Axis::ALL {
            for (p, q) in a.series(axis).iter().zip(b.series(axis)) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn constant_axis_cannot_be_normalized() {
    let t = Trajectory::new(vec![1.0, 2.0, 3.0], vec![0.5; 3], vec![0.0, 1.0, 0.0], 0.1).unwrap();
    let b = TrajectoryBatch::new(vec![t]).unwrap();
    assert!(matches!(normalize(&b), Err(Error::DegenerateAxis(Axis::Theta))));
}

#[test]
fn window_truncates_or_rejects() {
    let batch = generate(&default_params()).unwrap();
    let w = window(&batch, 1024).unwrap();
    assert_eq!(w.steps(), 1024);
    assert_eq!(w.trajectories()[3].r(), &batch.trajectories()[3].r()[..1024]);
    assert!(matches!(window(&batch, 2000), Err(Error::Range { requested: 2000, available: 1100 })));
}

#[test]
fn velocity_is_forward_difference() {
    let t = Trajectory::new(vec![1.0, 1.5, 1.25], vec![0.0; 3], vec![0.0; 3], 0.5).unwrap();
    assert_eq!(velocity_series(&t, Axis::R), vec![1.0, -0.5]);
}

proptest! {
    #[test]
    fn unwrap_removes_jumps_and_preserves_angles(steps in prop::collection::vec(-3.0f64..3.0, 1..100), start in -PI..PI) {
        let mut truth = vec![start];
        for s in &steps {
            truth.push(truth.last().unwrap() + s);
        }
        let mut wrapped: Vec<f64> = truth.iter().map(|a| a.sin().atan2(a.cos())).collect();
        unwrap_angles(&mut wrapped);
        for w in wrapped.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= PI);
        }
        for (a, b) in truth.iter().zip(&wrapped) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(seed in any::<u64>(), m in 1usize..4, n in 2usize..30) {
        let mut rng = seeded(seed);
        let trajs = (0..m).map(|_| {
            let r = (0..n).map(|_| rng.random_range(0.0..1e3)).collect();
            let mut a = 0.0;
            let th = (0..n).map(|_| { a += rng.random_range(-1.0..1.0); a }).collect();
            let z = (0..n).map(|_| rng.random_range(-1e-8..1e-8)).collect();
            Trajectory::new(r, th, z, 0.01).unwrap()
        }).collect();
        let b = TrajectoryBatch::new(trajs).unwrap();
        let mut buf = Vec::new();
        write_batch(&b, &mut buf).unwrap();
        let back = read_batch(buf.as_slice(), 0.01).unwrap();
        prop_assert_eq!(b, back);
    }
}
