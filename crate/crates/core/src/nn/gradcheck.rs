//! Central finite-difference checks for every differentiable op.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NnError, ParamId, ParamStore, Tensor, Var};

type Build = dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var, NnError>;

fn loss_of(store: &ParamStore, ids: &[ParamId], build: &Build) -> f64 {
    let mut g = Graph::with_params(store);
    let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
    let l = build(&mut g, &vars).unwrap();
    g.value(l).item() as f64
}

/// Relative error `‖g_fd − g_an‖ / max(‖g_fd‖, ‖g_an‖)` over every input coordinate.
pub(crate) fn fd_relative_error(inputs: Vec<Tensor>, h: f32, build: &Build) -> f64 {
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("in{i}"), t))
        .collect();
    let analytic = {
        let mut g = Graph::with_params(&store);
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let l = build(&mut g, &vars).unwrap();
        g.backward(l).unwrap()
    };
    let (mut diff, mut n_fd, mut n_an) = (0.0f64, 0.0f64, 0.0f64);
    for &id in &ids {
        let numel = store.value(id).numel();
        let an = analytic
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()));
        for k in 0..numel {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + h;
            let up = loss_of(&store, &ids, build);
            store.get_mut(id).value.data_mut()[k] = orig - h;
            let down = loss_of(&store, &ids, build);
            store.get_mut(id).value.data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h as f64);
            let a = an.data()[k] as f64;
            diff += (fd - a).powi(2);
            n_fd += fd * fd;
            n_an += a * a;
        }
    }
    let denom = n_fd.max(n_an).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed)
}

/// Reduces `y` to a scalar with a fixed random projection so every output
/// element carries a distinct weight.
fn project(g: &mut Graph<'_>, y: Var, seed: u64) -> Result<Var, NnError> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::randn(g.value(y).shape(), 1.0, &mut r);
    let wv = g.input(w);
    let p = g.mul(y, wv)?;
    g.sum(p)
}

const TOL: f64 = 1e-3;
const H: f32 = 1e-3;

fn assert_fd(name: &str, inputs: Vec<Tensor>, build: &Build) {
    let err = fd_relative_error(inputs, H, build);
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn linear_loss_gradient_is_input() {
    let mut r = rng();
    let x = Tensor::randn(&[2, 3], 1.0, &mut r);
    let mut store = ParamStore::new();
    let wid = store.add("w", Tensor::randn(&[2, 3], 1.0, &mut r));
    let mut g = Graph::with_params(&store);
    let w = g.param(wid);
    let xv = g.input(x.clone());
    let p = g.mul(w, xv).unwrap();
    let l = g.sum(p).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(wid).unwrap(), &x);
}

#[test]
fn unused_param_gets_zero_gradient() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::full(&[3], 2.0));
    let b = store.add("b", Tensor::full(&[3], 5.0));
    let g = {
        let mut g = Graph::with_params(&store);
        let av = g.param(a);
        let _bv = g.param(b);
        let l = g.sum(av).unwrap();
        g.backward(l).unwrap()
    };
    g.accumulate_into(&mut store).unwrap();
    assert!(store.get(b).grad.data().iter().all(|&v| v == 0.0));
    assert!(store.get(a).grad.data().iter().all(|&v| v == 1.0));
}

#[test]
fn non_scalar_loss_rejected() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x), Err(NnError::Shape(_))));
}

#[test]
fn conv_mse_4x4() {
    let mut r = rng();
    let x = Tensor::randn(&[1, 1, 4, 4], 1.0, &mut r);
    let target = Tensor::randn(&[1, 1, 4, 4], 1.0, &mut r);
    assert_fd(
        "conv+mse",
        vec![
            x,
            Tensor::randn(&[1, 1, 3, 3], 0.5, &mut r),
            Tensor::randn(&[1], 0.5, &mut r),
        ],
        &move |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 1, 1)?;
            let t = g.input(target.clone());
            g.mse(y, t)
        },
    );
}

#[test]
fn conv_strided_and_pointwise() {
    let mut r = rng();
    for (k, stride, pad) in [(3, 2, 1), (1, 1, 0), (3, 1, 0)] {
        let inputs = vec![
            Tensor::randn(&[2, 3, 5, 6], 1.0, &mut r),
            Tensor::randn(&[2, 3, k, k], 0.5, &mut r),
            Tensor::randn(&[2], 0.5, &mut r),
        ];
        assert_fd(
            &format!("conv k{k} s{stride} p{pad}"),
            inputs,
            &move |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride, pad)?;
                project(g, y, 1)
            },
        );
    }
}

#[test]
fn group_norm() {
    let mut r = rng();
    let inputs = vec![
        Tensor::randn(&[2, 4, 3, 3], 1.0, &mut r),
        Tensor::randn(&[4], 1.0, &mut r),
        Tensor::randn(&[4], 1.0, &mut r),
    ];
    assert_fd("group_norm", inputs, &|g, v| {
        let y = g.group_norm(v[0], v[1], v[2], 2)?;
        project(g, y, 2)
    });
}

#[test]
fn silu_add_mul_scale() {
    let mut r = rng();
    let inputs = vec![
        Tensor::randn(&[1, 2, 3, 3], 1.5, &mut r),
        Tensor::randn(&[1, 2, 3, 3], 1.0, &mut r),
    ];
    assert_fd("silu/add/mul/scale", inputs, &|g, v| {
        let s = g.silu(v[0])?;
        let a = g.add(s, v[1])?;
        let m = g.mul(a, v[0])?;
        let y = g.scale(m, -0.7)?;
        project(g, y, 3)
    });
}

#[test]
fn add_channel_and_linear() {
    let mut r = rng();
    let inputs = vec![
        Tensor::randn(&[2, 3, 2, 2], 1.0, &mut r),
        Tensor::randn(&[2, 5], 1.0, &mut r),
        Tensor::randn(&[3, 5], 0.5, &mut r),
        Tensor::randn(&[3], 0.5, &mut r),
    ];
    assert_fd("add_channel/linear", inputs, &|g, v| {
        let e = g.linear(v[1], v[2], v[3])?;
        let y = g.add_channel(v[0], e)?;
        project(g, y, 4)
    });
}

#[test]
fn concat_and_upsample() {
    let mut r = rng();
    let inputs = vec![
        Tensor::randn(&[1, 2, 2, 3], 1.0, &mut r),
        Tensor::randn(&[1, 1, 2, 3], 1.0, &mut r),
    ];
    assert_fd("concat/upsample", inputs, &|g, v| {
        let c = g.concat(v[0], v[1])?;
        let u = g.upsample2x(c)?;
        project(g, u, 5)
    });
}

#[test]
fn mse_and_l1() {
    let mut r = rng();
    let inputs = vec![
        Tensor::randn(&[1, 1, 3, 4], 1.0, &mut r),
        Tensor::randn(&[1, 1, 3, 4], 1.0, &mut r),
    ];
    assert_fd("mse+l1", inputs, &|g, v| {
        let a = g.mse(v[0], v[1])?;
        let b = g.l1(v[0], v[1])?;
        g.add(a, b)
    });
}

#[test]
fn grad_map() {
    let mut r = rng();
    let inputs = vec![Tensor::randn(&[2, 2, 4, 5], 1.0, &mut r)];
    assert_fd("grad_map", inputs, &|g, v| {
        let y = g.grad_map(v[0])?;
        project(g, y, 6)
    });
}
