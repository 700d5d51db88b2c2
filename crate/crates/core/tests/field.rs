use std::path::Path;

use geomag_nav::field::{
    derive_elements, dipole_field, field_at, load_grid, peaks_anomaly, AnomalyPatch, BaseField, DipoleParams,
    FieldGrid, LocalProjection, World,
};
use geomag_nav::Error;
use proptest::prelude::*;

fn pos(lat: f64, lon: f64) -> geomag_nav::field::GeoPosition {
    LocalProjection::new(0.0, 0.0).unwrap().position(lat, lon).unwrap()
}

fn untilted() -> DipoleParams {
    DipoleParams {
        tilt_deg: 0.0,
        pole_lon_deg: 0.0,
        ..Default::default()
    }
}

#[test]
fn pole_magnitude_is_twice_equatorial() {
    let p = untilted();
    let pole = dipole_field(&pos(90.0, 0.0), &p).unwrap();
    let eq = dipole_field(&pos(0.0, 37.0), &p).unwrap();
    assert!((pole.f_nt - 2.0 * eq.f_nt).abs() <= 1e-9 * pole.f_nt);
    assert!(pole.h_nt.abs() < 1e-9 * pole.f_nt);
    assert!((pole.incl_deg.unwrap().abs() - 90.0).abs() < 1e-9);
    assert_eq!(eq.incl_deg.unwrap(), 0.0);
}

fn anomaly_world() -> World {
    World::dipole(DipoleParams::default())
        .unwrap()
        .with_patches(vec![AnomalyPatch {
            lat_range_deg: [20.0, 23.0],
            lon_range_deg: [133.0, 136.0],
            scale: [600.0, 400.0, 200.0],
        }])
        .unwrap()
}

#[test]
fn outside_patches_equals_dipole() {
    let w = anomaly_world();
    let p = pos(25.0, 131.0);
    assert_eq!(field_at(&p, &w).unwrap(), dipole_field(&p, &DipoleParams::default()).unwrap());
}

#[test]
fn patch_center_adds_scaled_peak_value() {
    let w = anomaly_world();
    let p = pos(21.5, 134.5);
    let base = dipole_field(&p, &DipoleParams::default()).unwrap();
    let m = field_at(&p, &w).unwrap();
    // 3 e^-1 - 0 - (1/3) e^-1 at the canonical origin.
    let peak = 8.0 / 3.0 * (-1.0f64).exp();
    assert!((peaks_anomaly(0.0, 0.0) - peak).abs() < 1e-15);
    for (got, (b, s)) in [m.bx_nt, m.by_nt, m.bz_nt]
        .iter()
        .zip([base.bx_nt, base.by_nt, base.bz_nt].iter().zip([600.0, 400.0, 200.0]))
    {
        assert!((got - b - s * peak).abs() < 1e-9, "{got} vs {}", b + s * peak);
    }
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn grid_world(g: FieldGrid) -> World {
    World {
        base: BaseField::Grid(g),
        patches: Vec::new(),
    }
}

#[test]
fn constant_grid_is_constant_inside() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "c.txt",
        "MAGGRID v1 2 2 20 130 1 1\n100 200 300\n100 200 300\n100 200 300\n100 200 300\n",
    );
    let w = grid_world(load_grid(&path).unwrap());
    for (lat, lon) in [(20.0, 130.0), (20.3, 130.9), (21.0, 131.0), (20.5, 130.5)] {
        let m = field_at(&pos(lat, lon), &w).unwrap();
        assert_eq!((m.bx_nt, m.by_nt, m.bz_nt), (100.0, 200.0, 300.0));
    }
}

#[test]
fn nan_sample_is_reported_with_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "n.txt",
        "MAGGRID v1 2 2 20 130 1 1\n1 2 3\n1 2 3\n1 NaN 3\n1 2 3\n",
    );
    match load_grid(&path) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 4);
            assert!(message.contains("row 1, col 0"), "{message}");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn linear_grid_midpoint_is_mean_of_neighbours() {
    // bx = 10 * lon index, by = 3 * lat index.
    let comps: Vec<[f64; 3]> = (0..3)
        .flat_map(|i| (0..3).map(move |j| [10.0 * j as f64, 3.0 * i as f64, 1000.0]))
        .collect();
    let g = FieldGrid::new(20.0, 130.0, 0.5, 0.5, 3, 3, &comps).unwrap();
    let w = grid_world(g.clone());
    let m = field_at(&pos(20.5, 130.25), &w).unwrap();
    let a = g.sample(1, 0);
    let b = g.sample(1, 1);
    assert!((m.bx_nt - 0.5 * (a.bx_nt + b.bx_nt)).abs() < 1e-12);
    assert!((m.by_nt - 0.5 * (a.by_nt + b.by_nt)).abs() < 1e-12);
}

#[test]
fn node_queries_are_bit_exact_and_text_round_trips() {
    let comps: Vec<[f64; 3]> = (0..12)
        .map(|k| [29000.0 + 1.37 * k as f64, 2500.0 - 0.71 * k as f64, 12000.0 + (k as f64).sqrt()])
        .collect();
    let g = FieldGrid::new(18.0, 129.0, 0.25, 0.5, 3, 4, &comps).unwrap();
    let w = grid_world(g.clone());
    for i in 0..3 {
        for j in 0..4 {
            let m = field_at(&pos(18.0 + 0.25 * i as f64, 129.0 + 0.5 * j as f64), &w).unwrap();
            let s = g.sample(i, j);
            assert_eq!((m.bx_nt, m.by_nt, m.bz_nt), (s.bx_nt, s.by_nt, s.bz_nt));
        }
    }
    let back = FieldGrid::parse(&g.to_text(), Path::new("mem")).unwrap();
    assert_eq!(back, g);
    assert!(matches!(field_at(&pos(17.9, 129.5), &w), Err(Error::OutOfDomain(_))));
}

proptest! {
    #[test]
    fn element_identities(x in -6.0e4f64..6.0e4, y in -6.0e4f64..6.0e4, z in -6.0e4f64..6.0e4) {
        prop_assume!(x.hypot(y) > 1.0);
        let m = derive_elements(x, y, z).unwrap();
        let f = m.f_nt;
        prop_assert!((m.h_nt * m.h_nt + z * z - f * f).abs() <= 1e-9 * f * f);
        let d = m.decl_deg.unwrap().to_radians();
        let i = m.incl_deg.unwrap().to_radians();
        prop_assert!((m.h_nt * d.cos() - x).abs() <= 1e-9 * f);
        prop_assert!((m.h_nt * d.sin() - y).abs() <= 1e-9 * f);
        prop_assert!((f * i.sin() - z).abs() <= 1e-9 * f);
    }
}
