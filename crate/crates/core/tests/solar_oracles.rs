mod oracles;

use heliogen_core::optimizer::Evaluator;
use heliogen_core::scene::{
    baseline_flat_roof, baseline_tilted_roof, box_mesh, enumerate_boundary_conditions, Aabb,
    BoundaryCondition, Heightmap, Scene, SceneConfig,
};
use heliogen_core::seeded_rng;
use heliogen_core::solar::{avg_radiation, ray_box, ray_triangle, Occluders, SkyConfig, SkyModel};
use rand::Rng;

fn sky() -> SkyModel {
    SkyModel::new(SkyConfig::default()).unwrap()
}

/// Every fourth sun sample keeps the brute-force runs short.
fn thin_sky() -> SkyModel {
    let full = sky();
    let samples = full.samples.iter().step_by(4).copied().collect();
    SkyModel::from_samples(full.config.clone(), samples).unwrap()
}

fn random_unit_up(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.01..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

#[test]
fn grid_visibility_matches_brute_force_on_random_scenes() {
    let cfg = SceneConfig::default();
    let bcs = enumerate_boundary_conditions(cfg.positions_per_side());
    let mut rng = seeded_rng(11, 0);
    let mut checked = 0usize;
    for _ in 0..12 {
        let h = oracles::random_heightmap(&mut rng, cfg.height_cap);
        let bc = bcs[rng.random_range(0..bcs.len())];
        let scene = Scene::from_heightmap(&h, &bc, &cfg).unwrap();
        let occ = Occluders::for_scene(&scene);
        for face in &scene.building.triangles {
            let c = face.centroid();
            let o = [
                c[0] + 1e-3 * face.normal[0],
                c[1] + 1e-3 * face.normal[1],
                c[2] + 1e-3 * face.normal[2],
            ];
            let n = face.normal;
            for _ in 0..8 {
                let d = random_unit_up(&mut rng);
                // Only directions in front of the face are ever traced.
                if n[0] * d[0] + n[1] * d[1] + n[2] * d[2] <= 0.0 {
                    continue;
                }
                assert_eq!(
                    occ.visible(o, d),
                    oracles::brute_visible(&scene, o, d),
                    "origin {o:?} dir {d:?}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 5_000, "{checked}");
}

#[test]
fn average_radiation_matches_brute_force() {
    let cfg = SceneConfig::default();
    let sky = thin_sky();
    let mut rng = seeded_rng(12, 0);
    let bcs = enumerate_boundary_conditions(cfg.positions_per_side());
    for _ in 0..3 {
        let h = oracles::random_heightmap(&mut rng, cfg.height_cap);
        let bc = bcs[rng.random_range(0..bcs.len())];
        let scene = Scene::from_heightmap(&h, &bc, &cfg).unwrap();
        let fast = avg_radiation(&scene, &sky).unwrap();
        let slow = oracles::brute_avg_radiation(&scene, &sky);
        assert!(
            (fast - slow).abs() <= 1e-9 * slow.abs().max(1.0),
            "{fast} vs {slow}"
        );
    }
}

#[test]
fn slab_test_agrees_with_box_triangles() {
    let mut rng = seeded_rng(13, 0);
    let b = Aabb {
        min: [-2.0, -1.0, 0.0],
        max: [3.0, 2.0, 4.0],
    };
    let tris = box_mesh(&b).triangles;
    let mut hits = 0;
    for _ in 0..1000 {
        let o = [
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(0.0..2.0),
        ];
        if (0..3).all(|k| o[k] >= b.min[k] && o[k] <= b.max[k]) {
            continue;
        }
        let d = random_unit_up(&mut rng);
        let slab = ray_box(o, d, &b);
        let tri = tris
            .iter()
            .filter_map(|t| ray_triangle(o, d, &t.vertices))
            .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
        assert_eq!(slab.is_some(), tri.is_some(), "origin {o:?} dir {d:?}");
        if let (Some(a), Some(t)) = (slab, tri) {
            assert!((a - t).abs() < 1e-9);
            hits += 1;
        }
        assert_eq!(
            slab.is_some(),
            oracles::marched_box_hit(o, d, &b, 40.0, 40_000),
            "march disagrees: origin {o:?} dir {d:?}"
        );
    }
    assert!(hits > 50);
}

#[test]
fn adding_an_obstruction_never_increases_radiation() {
    let cfg = SceneConfig::default();
    let sky = thin_sky();
    let positions = cfg.positions_per_side();
    let mut rng = seeded_rng(14, 0);
    for _ in 0..50 {
        let h = oracles::random_heightmap(&mut rng, cfg.height_cap);
        let mut sparse = BoundaryCondition {
            east: Some(rng.random_range(0..positions)),
            south: Some(rng.random_range(0..positions)),
            west: Some(rng.random_range(0..positions)),
        };
        let dense = sparse;
        match rng.random_range(0..3) {
            0 => sparse.east = None,
            1 => sparse.south = None,
            _ => sparse.west = None,
        }
        let r_sparse =
            avg_radiation(&Scene::from_heightmap(&h, &sparse, &cfg).unwrap(), &sky).unwrap();
        let r_dense =
            avg_radiation(&Scene::from_heightmap(&h, &dense, &cfg).unwrap(), &sky).unwrap();
        assert!(r_dense <= r_sparse + 1e-12, "{r_dense} > {r_sparse}");
    }
}

#[test]
fn mirrored_scene_receives_the_same_radiation() {
    let cfg = SceneConfig::default();
    let sky = sky();
    let bcs = enumerate_boundary_conditions(cfg.positions_per_side());
    let mut rng = seeded_rng(15, 0);
    for _ in 0..6 {
        let h = oracles::random_heightmap(&mut rng, cfg.height_cap);
        let bc = bcs[rng.random_range(0..bcs.len())];
        let a = avg_radiation(&Scene::from_heightmap(&h, &bc, &cfg).unwrap(), &sky).unwrap();
        let m = avg_radiation(
            &Scene::from_heightmap(&h.mirrored(), &bc.mirrored(&cfg).unwrap(), &cfg).unwrap(),
            &sky,
        )
        .unwrap();
        assert!((a - m).abs() <= 1e-10 * a.abs(), "{a} vs {m}");
    }
}

#[test]
fn south_tilted_roof_beats_flat_roof() {
    let cfg = SceneConfig::default();
    let eval = Evaluator::new(cfg.clone(), sky(), 100.0);
    let tilted = baseline_tilted_roof(42.0, &cfg).unwrap();
    let flat = baseline_flat_roof(tilted.volume(&cfg), false, &cfg).unwrap();
    let bc = BoundaryCondition::EMPTY;
    let rt = eval.evaluate(&tilted, &bc).unwrap().avg_radiation;
    let rf = eval.evaluate(&flat, &bc).unwrap().avg_radiation;
    assert!(rt > rf, "tilted {rt} flat {rf}");
}

#[test]
fn volume_matches_monte_carlo() {
    let cfg = SceneConfig::default();
    let mut rng = seeded_rng(16, 0);
    let mut mc_rng = seeded_rng(16, 1);
    for _ in 0..20 {
        let h = oracles::random_heightmap(&mut rng, cfg.height_cap);
        let exact = h.volume(&cfg);
        let mc = oracles::monte_carlo_volume(&h, &cfg, 1_000_000, &mut mc_rng);
        assert!((exact - mc).abs() <= 5e-3 * exact, "{exact} vs {mc}");
    }
    let flat = Heightmap::flat(1.0);
    assert!((flat.volume(&cfg) - cfg.plot_area()).abs() < 1e-12);
}

#[test]
fn meshed_volume_is_resolution_independent_for_planes() {
    let cfg = SceneConfig::default();
    let h = baseline_tilted_roof(30.0, &cfg).unwrap();
    let base = h.volume(&cfg);
    for res in [5, 9, 11, 21] {
        let v = h.to_field(&cfg).resample(res).volume();
        assert!((v - base).abs() < 1e-9 * base, "res {res}: {v} vs {base}");
    }
}
