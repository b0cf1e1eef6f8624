//! Forward kinematics and projection recorded on a [`Graph`], batched over
//! rows of a `[n, d]` pose matrix.
//!
//! 3x3 matrices are stored as rows of 9 entries in column-major order
//! (entry `(i, j)` at column `3j + i`), so a batch of `n` matrices is an
//! `[n, 9]` tensor and products are written with gathers, products and sums.

use diffcore::{Graph, Tensor, Var};

use super::{Camera, HandSkeleton, PoseLayout};

/// Columns `cols` of an `[n, c]` matrix.
pub fn gather_cols(g: &mut Graph, x: Var, cols: &[usize]) -> Var {
    g.select_cols(x, cols)
}

/// The two columns of every 6D block of `hand`, as `[n * rotations, 3]`
/// tensors ordered pose-major.
pub fn rotation_columns(g: &mut Graph, psi: Var, layout: &PoseLayout, hand: usize) -> (Var, Var) {
    let (n, d) = (g.value(psi).rows(), g.value(psi).cols());
    let mut i1 = Vec::with_capacity(n * layout.rotations * 3);
    let mut i2 = Vec::with_capacity(n * layout.rotations * 3);
    for p in 0..n {
        for r in 0..layout.rotations {
            let base = p * d + layout.theta_index(hand, r, 0);
            i1.extend([base, base + 2, base + 4]);
            i2.extend([base + 1, base + 3, base + 5]);
        }
    }
    let shape = [n * layout.rotations, 3];
    (g.gather(psi, i1, &shape), g.gather(psi, i2, &shape))
}

fn broadcast_cols(g: &mut Graph, col: Var, width: usize) -> Var {
    let ones = g.constant(Tensor::ones(&[1, width]));
    g.matmul(col, ones)
}

fn normalize_rows(g: &mut Graph, x: Var) -> Var {
    let sq = g.square(x);
    let norm2 = g.row_sums(sq);
    let norm = g.sqrt(norm2);
    let wide = broadcast_cols(g, norm, 3);
    g.div(x, wide)
}

fn cross_rows(g: &mut Graph, a: Var, b: Var) -> Var {
    let a_yzx = gather_cols(g, a, &[1, 2, 0]);
    let a_zxy = gather_cols(g, a, &[2, 0, 1]);
    let b_yzx = gather_cols(g, b, &[1, 2, 0]);
    let b_zxy = gather_cols(g, b, &[2, 0, 1]);
    let p = g.mul(a_yzx, b_zxy);
    let q = g.mul(a_zxy, b_yzx);
    g.sub(p, q)
}

/// Gram-Schmidt on batched columns; result `[m, 9]` column-major.
pub fn graph_rot6d(g: &mut Graph, a1: Var, a2: Var) -> Var {
    let b1 = normalize_rows(g, a1);
    let prod = g.mul(a2, b1);
    let dot = g.row_sums(prod);
    let dot3 = broadcast_cols(g, dot, 3);
    let proj = g.mul(dot3, b1);
    let u = g.sub(a2, proj);
    let b2 = normalize_rows(g, u);
    let b3 = cross_rows(g, b1, b2);
    g.concat(&[b1, b2, b3], 1)
}

fn mat_mul9(g: &mut Graph, a: Var, b: Var) -> Var {
    let mut acc = None;
    for l in 0..3 {
        let mut ca = Vec::with_capacity(9);
        let mut cb = Vec::with_capacity(9);
        for j in 0..3 {
            for i in 0..3 {
                ca.push(3 * l + i);
                cb.push(3 * j + l);
            }
        }
        let ga = gather_cols(g, a, &ca);
        let gb = gather_cols(g, b, &cb);
        let term = g.mul(ga, gb);
        acc = Some(match acc {
            None => term,
            Some(s) => g.add(s, term),
        });
    }
    acc.expect("three terms")
}

fn mat_vec9(g: &mut Graph, a: Var, v: Var) -> Var {
    let mut acc = None;
    for l in 0..3 {
        let ga = gather_cols(g, a, &[3 * l, 3 * l + 1, 3 * l + 2]);
        let gv = gather_cols(g, v, &[l, l, l]);
        let term = g.mul(ga, gv);
        acc = Some(match acc {
            None => term,
            Some(s) => g.add(s, term),
        });
    }
    acc.expect("three terms")
}

/// Root positions `[n, 3]` of `hand`: `t` back-projected at depth
/// `reference_focal / s`.
fn graph_root(
    g: &mut Graph,
    psi: Var,
    layout: &PoseLayout,
    hand: usize,
    reference_focal: f64,
    cam: &Camera,
) -> Var {
    let ti = layout.t_index(hand);
    let tx = gather_cols(g, psi, &[ti]);
    let ty = gather_cols(g, psi, &[ti + 1]);
    let s = gather_cols(g, psi, &[layout.s_index(hand)]);
    let f = g.scalar(reference_focal);
    let depth = g.div(f, s);
    let coord = |g: &mut Graph, t: Var, c: f64, focal: f64| {
        let shifted = g.add_scalar(t, -c);
        let scaled = g.scale(shifted, 1.0 / focal);
        g.mul(scaled, depth)
    };
    let x = coord(g, tx, cam.principal_point[0], cam.focal[0]);
    let y = coord(g, ty, cam.principal_point[1], cam.focal[1]);
    g.concat(&[x, y, depth], 1)
}

/// Camera-frame keypoints of every row of `psi` (`[n, d]`), returned as
/// `[n, 3 * total_keypoints]` with coordinates interleaved per keypoint.
/// Only the intrinsics of `cam` are used.
pub fn graph_forward_kinematics(
    g: &mut Graph,
    psi: Var,
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> Var {
    let layout = skeleton.layout();
    let n = g.value(psi).rows();
    assert_eq!(g.value(psi).cols(), layout.dim(), "pose width does not match skeleton");
    let mut parts = Vec::with_capacity(skeleton.total_keypoints());
    for (h, chain) in skeleton.hands.iter().enumerate() {
        let (a1, a2) = rotation_columns(g, psi, &layout, h);
        let rots = graph_rot6d(g, a1, a2);
        let rot_of = |g: &mut Graph, r: usize| {
            let idx = (0..n)
                .flat_map(|p| (0..9).map(move |c| (p * layout.rotations + r) * 9 + c))
                .collect();
            g.gather(rots, idx, &[n, 9])
        };
        let beta = (layout.betas > 0).then(|| {
            let b0 = layout.beta_index(h, 0);
            let cols: Vec<usize> = (b0..b0 + layout.betas).collect();
            gather_cols(g, psi, &cols)
        });
        let m = chain.keypoints.len();
        let mut pos: Vec<Option<Var>> = vec![None; m];
        let mut frame: Vec<Option<Var>> = vec![None; m];
        for (k, kp) in chain.keypoints.iter().enumerate() {
            match kp.parent {
                None => {
                    pos[k] = Some(graph_root(g, psi, &layout, h, skeleton.reference_focal, cam));
                    frame[k] = Some(rot_of(g, kp.rotation.unwrap_or(0)));
                }
                Some(p) => {
                    let rest = g.constant(Tensor::matrix(1, 3, kp.rest_offset.to_vec()));
                    let mut off = g.repeat_rows(rest, n);
                    if let Some(b) = beta {
                        let dirs = kp.shape_dirs.iter().flatten().copied().collect();
                        let dirs = g.constant(Tensor::matrix(layout.betas, 3, dirs));
                        let delta = g.matmul(b, dirs);
                        off = g.add(off, delta);
                    }
                    let fp = frame[p].expect("parents precede children");
                    let moved = mat_vec9(g, fp, off);
                    pos[k] = Some(g.add(pos[p].expect("parents precede children"), moved));
                    frame[k] = Some(match kp.rotation {
                        Some(r) => {
                            let rk = rot_of(g, r);
                            mat_mul9(g, fp, rk)
                        }
                        None => fp,
                    });
                }
            }
        }
        parts.extend(pos.into_iter().map(|p| p.expect("all keypoints placed")));
    }
    g.concat(&parts, 1)
}

/// Pinhole projection of `[n, 3K]` camera-frame joints to `(u, v)`, each
/// `[n, K]`. Depths are clamped at `min_depth` so keypoints behind the
/// camera stay finite; callers mask them out.
pub fn graph_project(g: &mut Graph, joints: Var, cam: &Camera, min_depth: f64) -> (Var, Var) {
    let k = g.value(joints).cols() / 3;
    let xs: Vec<usize> = (0..k).map(|i| 3 * i).collect();
    let ys: Vec<usize> = (0..k).map(|i| 3 * i + 1).collect();
    let zs: Vec<usize> = (0..k).map(|i| 3 * i + 2).collect();
    let x = gather_cols(g, joints, &xs);
    let y = gather_cols(g, joints, &ys);
    let z = gather_cols(g, joints, &zs);
    let z = g.clamp(z, min_depth, f64::INFINITY);
    let xz = g.div(x, z);
    let yz = g.div(y, z);
    let u = g.scale(xz, cam.focal[0]);
    let u = g.add_scalar(u, cam.principal_point[0]);
    let v = g.scale(yz, cam.focal[1]);
    let v = g.add_scalar(v, cam.principal_point[1]);
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handmodel::{forward_kinematics, PoseParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_pose(rng: &mut ChaCha8Rng, layout: &PoseLayout) -> Vec<f64> {
        let mut psi = vec![0.0; layout.dim()];
        for h in 0..layout.hands {
            for r in 0..layout.rotations {
                let base = layout.theta_index(h, r, 0);
                let id = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
                for c in 0..6 {
                    psi[base + c] = id[c] + rng.random_range(-0.4..0.4);
                }
            }
            for j in 0..layout.betas {
                psi[layout.beta_index(h, j)] = rng.random_range(-1.0..1.0);
            }
            psi[layout.t_index(h)] = rng.random_range(60.0..160.0);
            psi[layout.t_index(h) + 1] = rng.random_range(60.0..160.0);
            psi[layout.s_index(h)] = rng.random_range(0.5..0.8);
        }
        psi
    }

    #[test]
    fn matches_plain_kinematics() {
        let skel = HandSkeleton::two_hands(300.0);
        let cam = Camera::new([290.0, 290.0], [112.0, 112.0]);
        let layout = skel.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| random_pose(&mut rng, &layout)).collect();
        let mut g = Graph::new();
        let psi = g.constant(Tensor::matrix(3, layout.dim(), rows.concat()));
        let j = graph_forward_kinematics(&mut g, psi, &skel, &cam);
        let (u, v) = graph_project(&mut g, j, &cam, 1e-6);
        let k = skel.total_keypoints();
        for (p, row) in rows.iter().enumerate() {
            let pose = PoseParams::from_flat(&layout, row).unwrap();
            let plain = forward_kinematics(&pose, &skel, &cam).unwrap();
            for (i, q) in plain.iter().enumerate() {
                for a in 0..3 {
                    let got = g.value(j).data()[p * 3 * k + 3 * i + a];
                    assert!((got - q[a]).abs() < 1e-9, "pose {p} joint {i} axis {a}");
                }
                let uv = cam.project(q).unwrap();
                assert!((g.value(u).data()[p * k + i] - uv[0]).abs() < 1e-9);
                assert!((g.value(v).data()[p * k + i] - uv[1]).abs() < 1e-9);
            }
        }
    }
}
