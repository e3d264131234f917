//! Finite-difference checks of every parameterized network operation and
//! loss, runnable as a self-test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    aggregate_children, box_loss, build_merge_feature, candidate_input, classify_relations, decode_box,
    edge_loss, encode_candidates, encode_part, fuse_node_feature, fuse_structure_code, gradcheck,
    inject_parent_context, merge_loss, message_pass, norm_loss, predict_merge, total_loss, Bound, GradcheckReport,
    ModelParams, Tape, Tensor, Var,
};
use crate::geom::{OrientedBox, UnitQuaternion, Vec3};
use crate::structure::FEATURE_DIM;

/// Random probes per check.
pub const CHECK_PROBES: usize = 20;

fn random_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(rows, cols, 1.0, rng)
}

/// Perturbs every parameter so biases are nonzero and units are active in
/// both directions.
fn jittered(p: &ModelParams, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut out = p.clone();
    for (_, t) in out.iter_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    out
}

/// Gradient check over the named parameter tensors plus extra inputs.
fn check_op(
    params: &ModelParams,
    names: &[&str],
    extra: Vec<Tensor>,
    seed: u64,
    f: impl Fn(&mut Tape, &Bound, &[Var]) -> Var,
) -> GradcheckReport {
    let mut inputs: Vec<Tensor> = names.iter().map(|n| params.require(n).expect("known parameter").clone()).collect();
    let k = inputs.len();
    inputs.extend(extra);
    let owned: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    gradcheck(
        &inputs,
        |tape, vars| {
            let bound = Bound::from_pairs(owned.iter().cloned().zip(vars[..k].iter().copied()));
            f(tape, &bound, &vars[k..])
        },
        CHECK_PROBES,
        seed,
    )
}

fn linear_names(layers: &[&'static str]) -> Vec<String> {
    layers.iter().flat_map(|l| [format!("{l}.w"), format!("{l}.b")]).collect()
}

fn weighted_sum(tape: &mut Tape, v: Var, rng_seed: u64) -> Var {
    // a fixed random linear functional keeps every output coordinate in play
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let shape = tape.value(v).shape().to_vec();
    let w = Tensor::uniform(shape[0], shape[1], 1.0, &mut rng);
    let wv = tape.leaf(w);
    let p = tape.mul(v, wv);
    tape.sum(p)
}

/// Runs the finite-difference check of every operation; returns one report
/// per operation, in pipeline order.
pub fn operation_gradchecks(seed: u64) -> Vec<(&'static str, GradcheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp = jittered(&ModelParams::structure(seed), &mut rng);
    let labels = 4;
    let mp = jittered(&ModelParams::merge(seed, labels), &mut rng);
    let f = FEATURE_DIM;
    let mut out = Vec::new();

    let names = linear_names(&["part.l1", "part.l2", "part.out"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let pts = random_rows(12, 3, &mut rng);
    out.push((
        "encode_part",
        check_op(&sp, &refs, vec![], seed, |t, b, _| {
            let e = encode_part(t, b, &pts).expect("nonempty");
            weighted_sum(t, e, 1)
        }),
    ));

    let names = linear_names(&["child.lin"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "aggregate_children",
        check_op(&sp, &refs, vec![random_rows(4, f, &mut rng)], seed, |t, b, x| {
            let e = aggregate_children(t, b, x[0]);
            weighted_sum(t, e, 2)
        }),
    ));

    let names = linear_names(&["ctx.lin"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "inject_parent_context",
        check_op(
            &sp,
            &refs,
            vec![random_rows(3, f, &mut rng), random_rows(1, f, &mut rng)],
            seed,
            |t, b, x| {
                let e = inject_parent_context(t, b, x[0], x[1]);
                weighted_sum(t, e, 3)
            },
        ),
    ));

    let pairs = [(0, 1), (0, 2), (1, 2)];
    let names = linear_names(&["edge.l1", "edge.l2", "edge.tau"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "classify_relations",
        check_op(&sp, &refs, vec![random_rows(3, f, &mut rng)], seed, |t, b, x| {
            let po = classify_relations(t, b, x[0], &pairs);
            let a = weighted_sum(t, po.probs, 4);
            let c = weighted_sum(t, po.features, 5);
            t.add(a, c)
        }),
    ));

    let names = linear_names(&["mp.msg1", "mp.msg2", "mp.upd1", "mp.upd2", "mp.out"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "message_pass",
        check_op(
            &sp,
            &refs,
            vec![random_rows(3, f, &mut rng), random_rows(3, super::WIDE_DIM, &mut rng)],
            seed,
            |t, b, x| {
                let e = message_pass(t, b, x[0], &pairs, Some(x[1]), &[0, 2]);
                weighted_sum(t, e, 6)
            },
        ),
    ));

    let names = linear_names(&["box.offset", "box.scale", "box.rot"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cloud: Vec<Vec3> = (0..40)
        .map(|_| Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1)))
        .collect();
    out.push((
        "decode_box",
        check_op(&sp, &refs, vec![random_rows(1, f, &mut rng)], seed, |t, b, x| {
            let bv = decode_box(t, b, x[0], &cloud).expect("nonempty");
            let c = weighted_sum(t, bv.center, 7);
            let s = weighted_sum(t, bv.extents, 8);
            let r = weighted_sum(t, bv.rotation, 9);
            let cs = t.add(c, s);
            t.add(cs, r)
        }),
    ));

    let names = linear_names(&["cand.l1", "cand.l2"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cand = candidate_input(&random_rows(10, 3, &mut rng), 2, labels, 0.3);
    out.push((
        "encode_candidate",
        check_op(&mp, &refs, vec![], seed, |t, b, _| {
            let e = encode_candidates(t, b, std::slice::from_ref(&cand)).expect("nonempty");
            weighted_sum(t, e, 10)
        }),
    ));

    let w = super::WIDE_DIM;
    let names = linear_names(&["fuse_n"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "fuse_node_feature",
        check_op(
            &mp,
            &refs,
            vec![random_rows(2, w, &mut rng), random_rows(2, f, &mut rng)],
            seed,
            |t, b, x| {
                let e = fuse_node_feature(t, b, x[0], x[1]);
                weighted_sum(t, e, 11)
            },
        ),
    ));

    let names = linear_names(&["merge_m"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "build_merge_feature",
        check_op(
            &mp,
            &refs,
            vec![random_rows(2, w, &mut rng), random_rows(2, w, &mut rng)],
            seed,
            |t, b, x| {
                let e = build_merge_feature(t, b, x[0], x[1]);
                weighted_sum(t, e, 12)
            },
        ),
    ));

    let names = linear_names(&["struct_s"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "fuse_structure_code",
        check_op(
            &mp,
            &refs,
            vec![random_rows(2, w, &mut rng), random_rows(1, f, &mut rng)],
            seed,
            |t, b, x| {
                let e = fuse_structure_code(t, b, x[0], x[1]);
                weighted_sum(t, e, 13)
            },
        ),
    ));

    let names = linear_names(&["gm.l1", "gm.l2"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "predict_merge",
        check_op(&mp, &refs, vec![random_rows(3, w, &mut rng)], seed, |t, b, x| {
            let e = predict_merge(t, b, x[0]);
            weighted_sum(t, e, 14)
        }),
    ));

    // full merge chain from candidate points to score
    let names = linear_names(&["cand.l1", "cand.l2", "fuse_n", "merge_m", "struct_s", "gm.l1", "gm.l2"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cand_b = candidate_input(&random_rows(7, 3, &mut rng), 0, labels, 0.1);
    out.push((
        "merge_chain",
        check_op(
            &mp,
            &refs,
            vec![random_rows(2, f, &mut rng), random_rows(1, f, &mut rng)],
            seed,
            |t, b, x| {
                let c = encode_candidates(t, b, &[cand.clone(), cand_b.clone()]).expect("nonempty");
                let ct = fuse_node_feature(t, b, c, x[0]);
                let ci = t.gather_rows(ct, &[0, 1]);
                let cj = t.gather_rows(ct, &[1, 0]);
                let m = build_merge_feature(t, b, ci, cj);
                let mt = fuse_structure_code(t, b, m, x[1]);
                let s = predict_merge(t, b, mt);
                merge_loss(t, s, &[1.0, 0.0])
            },
        ),
    ));

    // structure loss terms through the box decoder
    let gt = OrientedBox::new(
        Vec3::new(0.05, -0.02, 0.01),
        Vec3::new(0.7, 0.35, 0.2),
        UnitQuaternion::from_axis_angle(Vec3::new(0.2, 1.0, 0.1), 0.3),
    )
    .expect("valid box");
    let names = linear_names(&["box.offset", "box.scale", "box.rot"]);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    out.push((
        "total_loss",
        check_op(
            &sp,
            &refs,
            vec![random_rows(1, f, &mut rng), Tensor::row(&[0.3, 0.6, 0.2, 0.8])],
            seed,
            |t, b, x| {
                let bv = decode_box(t, b, x[0], &cloud).expect("nonempty");
                let lb = box_loss(t, &bv, &gt);
                let ln = norm_loss(t, &bv, &gt);
                let p = t.sigmoid(x[1]);
                let le = edge_loss(t, p, &[1.0, 0.0, 0.0, 1.0]);
                total_loss(t, lb, ln, le)
            },
        ),
    ));

    out.push((
        "merge_loss",
        gradcheck(
            &[Tensor::row(&[0.2, 0.55, 0.9, 0.4])],
            |t, v| merge_loss(t, v[0], &[1.0, 0.0, 1.0, 0.0]),
            CHECK_PROBES,
            seed,
        ),
    ));
    out
}
