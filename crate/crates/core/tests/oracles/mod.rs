//! Independent reference implementations used to check the optimized code.
//!
//! Each oracle is deliberately naive: brute-force loops, direct formulas,
//! dense grids. Shared by the crate's integration tests and the workspace
//! acceptance suite.

#![allow(dead_code)]

use heliogen_core::nn::{Tensor, KERNEL, PADDING, STRIDE};
use heliogen_core::pareto::FrontPoint;
use heliogen_core::scene::{Aabb, Heightmap, Scene, SceneConfig};
use heliogen_core::solar::{ray_box, ray_triangle, SkyModel, RAY_OFFSET};
use rand::Rng;

/// Visibility against every obstruction box and every building triangle,
/// walls included.
pub fn brute_visible(scene: &Scene, origin: [f64; 3], dir: [f64; 3]) -> bool {
    if scene
        .obstructions
        .iter()
        .any(|b| ray_box(origin, dir, b).is_some())
    {
        return false;
    }
    !scene
        .building
        .triangles
        .iter()
        .any(|t| ray_triangle(origin, dir, &t.vertices).is_some())
}

/// Area-weighted irradiance with brute-force visibility.
pub fn brute_avg_radiation(scene: &Scene, sky: &SkyModel) -> f64 {
    let mut weighted = 0.0;
    let mut area = 0.0;
    for face in &scene.building.triangles {
        let n = face.normal;
        let c = face.centroid();
        let origin = [
            c[0] + RAY_OFFSET * n[0],
            c[1] + RAY_OFFSET * n[1],
            c[2] + RAY_OFFSET * n[2],
        ];
        let mut e = 0.0;
        for s in &sky.samples {
            let cos = n[0] * s.direction[0] + n[1] * s.direction[1] + n[2] * s.direction[2];
            if cos > 0.0 && brute_visible(scene, origin, s.direction) {
                e += s.weight * cos;
            }
        }
        weighted += e * face.area;
        area += face.area;
    }
    weighted / area
}

/// Ray–box intersection by marching: is any point `origin + t·dir`,
/// `t ∈ (0, t_max]`, inside the box? Coarse but independent of the slab test.
pub fn marched_box_hit(
    origin: [f64; 3],
    dir: [f64; 3],
    b: &Aabb,
    t_max: f64,
    steps: usize,
) -> bool {
    (1..=steps).any(|i| {
        let t = t_max * i as f64 / steps as f64;
        (0..3).all(|k| {
            let p = origin[k] + t * dir[k];
            p >= b.min[k] && p <= b.max[k]
        })
    })
}

/// Bilinear height of a heightmap at plot coordinates, written directly from
/// the four corner heights.
pub fn bilinear_height(h: &Heightmap, cfg: &SceneConfig, x: f64, y: f64) -> f64 {
    let pitch = cfg.plot_size / 4.0;
    let u = ((x + 0.5 * cfg.plot_size) / pitch).clamp(0.0, 4.0);
    let v = ((0.5 * cfg.plot_size - y) / pitch).clamp(0.0, 4.0);
    let c = (u.floor() as usize).min(3);
    let r = (v.floor() as usize).min(3);
    let (fu, fv) = (u - c as f64, v - r as f64);
    let hh = &h.heights;
    hh[r][c] * (1.0 - fu) * (1.0 - fv)
        + hh[r][c + 1] * fu * (1.0 - fv)
        + hh[r + 1][c] * (1.0 - fu) * fv
        + hh[r + 1][c + 1] * fu * fv
}

/// Monte Carlo volume over the plot.
pub fn monte_carlo_volume(
    h: &Heightmap,
    cfg: &SceneConfig,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let half = 0.5 * cfg.plot_size;
    let mut sum = 0.0;
    for _ in 0..samples {
        let x = rng.random_range(-half..half);
        let y = rng.random_range(-half..half);
        sum += bilinear_height(h, cfg, x, y);
    }
    sum / samples as f64 * cfg.plot_area()
}

/// O(n²) non-dominated filter; duplicates keep the lowest payload; sorted by
/// the first objective, then the second.
pub fn brute_front(points: &[FrontPoint]) -> Vec<FrontPoint> {
    let mut out: Vec<FrontPoint> = Vec::new();
    for p in points {
        let dominated = points.iter().any(|q| q.dominates(p));
        let dup_earlier = points
            .iter()
            .any(|q| q.objectives == p.objectives && q.payload < p.payload);
        if !dominated && !dup_earlier {
            out.push(*p);
        }
    }
    out.sort_by(|a, b| {
        a.objectives[0]
            .total_cmp(&b.objectives[0])
            .then(a.objectives[1].total_cmp(&b.objectives[1]))
    });
    out
}

/// Hypervolume by midpoint integration on a `cells × cells` grid spanning the
/// box between the ideal point and the reference.
pub fn grid_hypervolume(points: &[FrontPoint], reference: [f64; 2], cells: usize) -> f64 {
    let inside: Vec<&FrontPoint> = points
        .iter()
        .filter(|p| p.objectives[0] < reference[0] && p.objectives[1] < reference[1])
        .collect();
    if inside.is_empty() {
        return 0.0;
    }
    let lo = [
        inside
            .iter()
            .map(|p| p.objectives[0])
            .fold(f64::INFINITY, f64::min),
        inside
            .iter()
            .map(|p| p.objectives[1])
            .fold(f64::INFINITY, f64::min),
    ];
    let dx = (reference[0] - lo[0]) / cells as f64;
    let dy = (reference[1] - lo[1]) / cells as f64;
    // For each column, the lowest second objective among points left of it.
    let mut covered = 0usize;
    for i in 0..cells {
        let x = lo[0] + (i as f64 + 0.5) * dx;
        let best = inside
            .iter()
            .filter(|p| p.objectives[0] <= x)
            .map(|p| p.objectives[1])
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            let rows = ((reference[1] - best) / dy - 0.5).ceil().max(0.0) as usize;
            covered += rows.min(cells);
        }
    }
    covered as f64 * dx * dy
}

/// Direct sliding-window convolution (stride 2, pad 1, 4×4 taps): each
/// output is its bias plus taps in `(ky, kx, ci)` order.
pub fn reference_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (bn, h, wd, cin) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let cout = w.shape[3];
    let (oh, ow) = (h / STRIDE, wd / STRIDE);
    let mut out = Tensor::zeros(&[bn, oh, ow, cout]);
    for n in 0..bn {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b.data[co];
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let iy = (oy * STRIDE + ky) as i64 - PADDING as i64;
                            let ix = (ox * STRIDE + kx) as i64 - PADDING as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv =
                                    x.data[((n * h + iy as usize) * wd + ix as usize) * cin + ci];
                                acc += xv * w.data[((ky * KERNEL + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out.data[((n * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    out
}

/// Direct transposed convolution in gather form: output `(oy, ox)` collects
/// every input pixel and tap with `iy·2 + ky − 1 = oy`, in `(ky, kx, ci)` order.
pub fn reference_conv_transpose(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (bn, h, wd, cin) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let cout = w.shape[3];
    let (oh, ow) = (h * STRIDE, wd * STRIDE);
    let mut out = Tensor::zeros(&[bn, oh, ow, cout]);
    for n in 0..bn {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b.data[co];
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let ny = oy as i64 + PADDING as i64 - ky as i64;
                            let nx = ox as i64 + PADDING as i64 - kx as i64;
                            if ny < 0
                                || nx < 0
                                || ny % STRIDE as i64 != 0
                                || nx % STRIDE as i64 != 0
                            {
                                continue;
                            }
                            let (iy, ix) =
                                ((ny / STRIDE as i64) as usize, (nx / STRIDE as i64) as usize);
                            if iy >= h || ix >= wd {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv = x.data[((n * h + iy) * wd + ix) * cin + ci];
                                acc += xv * w.data[((ky * KERNEL + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out.data[((n * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    out
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    i: usize,
    step: f64,
) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + step;
    let up = f(&p);
    p[i] = x[i] - step;
    let down = f(&p);
    (up - down) / (2.0 * step)
}

/// Relative error with an absolute floor for tiny gradients.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

pub fn random_heightmap(rng: &mut impl Rng, cap: f64) -> Heightmap {
    let mut h = Heightmap::flat(0.0);
    for row in h.heights.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(0.0..cap);
        }
    }
    h
}
