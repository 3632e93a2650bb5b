//! Central finite-difference checks of [`Graph::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Padding, Tensor, Var};
use super::layers::{gru_cell, layer_norm};
use super::params::ParamStore;
use crate::error::Result;

/// Relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between the analytic gradient of
/// a scalar function of `inputs` and its central difference with step `h`,
/// maximised over the inputs.
pub fn max_relative_error<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|v| g.constant(v.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|v| g.constant(v.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut values = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].raw_dim()));
        let mut num2 = 0.0;
        let mut diff2 = 0.0;
        let mut ana2 = 0.0;
        for i in 0..inputs[k].len() {
            let orig = inputs[k].as_slice_memory_order().expect("contiguous")[i];
            values[k].as_slice_memory_order_mut().expect("contiguous")[i] = orig + h;
            let up = eval(&values)?;
            values[k].as_slice_memory_order_mut().expect("contiguous")[i] = orig - h;
            let down = eval(&values)?;
            values[k].as_slice_memory_order_mut().expect("contiguous")[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice_memory_order().expect("contiguous")[i];
            num2 += numeric * numeric;
            ana2 += a * a;
            diff2 += (a - numeric).powi(2);
        }
        let scale = num2.sqrt().max(ana2.sqrt());
        if scale > 0.0 {
            worst = worst.max(diff2.sqrt() / scale);
        }
    }
    Ok(worst)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_shape_vec(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect())
        .expect("shape product")
}

/// Like [`random`] but bounded away from zero, so kinks at the origin are
/// not straddled by the difference step.
fn random_signed(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    random(shape, rng, 0.1, 1.0).mapv_into(|v| if rng.gen_bool(0.5) { v } else { -v })
}

/// Finite-difference check of every primitive on random small shapes.
/// Returns `(primitive, relative error)` pairs.
pub fn primitive_checks(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut out = Vec::new();
    let mut push = |name, r: Result<f64>| -> Result<()> {
        out.push((name, r?));
        Ok(())
    };
    // Weighting by a fixed random tensor makes the scalar depend on every
    // output entry differently.
    let weighted = |g: &mut Graph, y: Var, w: &Tensor| -> Result<Var> {
        let w = g.constant(w.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    };

    let (a, b) = (random(&[3, 4], &mut rng, -1.0, 1.0), random(&[1, 4], &mut rng, -1.0, 1.0));
    let w = random(&[3, 4], &mut rng, -1.0, 1.0);
    push("add", max_relative_error(&[a.clone(), b.clone()], h, |g, v| {
        let y = g.add(v[0], v[1])?;
        weighted(g, y, &w)
    }))?;
    push("sub", max_relative_error(&[a.clone(), b.clone()], h, |g, v| {
        let y = g.sub(v[0], v[1])?;
        weighted(g, y, &w)
    }))?;
    push("mul", max_relative_error(&[a.clone(), b.clone()], h, |g, v| {
        let y = g.mul(v[0], v[1])?;
        weighted(g, y, &w)
    }))?;
    let pos = random(&[1, 4], &mut rng, 0.5, 2.0);
    push("div", max_relative_error(&[a.clone(), pos.clone()], h, |g, v| {
        let y = g.div(v[0], v[1])?;
        weighted(g, y, &w)
    }))?;
    push("scale", max_relative_error(std::slice::from_ref(&a), h, |g, v| {
        let y = g.scale(v[0], -1.7);
        let y = g.add_scalar(y, 0.3);
        weighted(g, y, &w)
    }))?;

    let m2 = random(&[4, 2], &mut rng, -1.0, 1.0);
    let w2 = random(&[3, 2], &mut rng, -1.0, 1.0);
    push("matmul", max_relative_error(&[a.clone(), m2.clone()], h, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        weighted(g, y, &w2)
    }))?;
    let a3 = random(&[2, 3, 4], &mut rng, -1.0, 1.0);
    let b3 = random(&[2, 4, 2], &mut rng, -1.0, 1.0);
    let w3 = random(&[2, 3, 2], &mut rng, -1.0, 1.0);
    push("matmul-batched", max_relative_error(&[a3.clone(), b3], h, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        weighted(g, y, &w3)
    }))?;
    push("matmul-shared", max_relative_error(&[a3.clone(), m2], h, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        weighted(g, y, &w3)
    }))?;

    let s = random_signed(&[3, 4], &mut rng);
    push("relu", max_relative_error(std::slice::from_ref(&s), h, |g, v| {
        let y = g.relu(v[0]);
        weighted(g, y, &w)
    }))?;
    let alpha = random(&[1], &mut rng, 0.1, 0.5);
    push("prelu", max_relative_error(&[s.clone(), alpha], h, |g, v| {
        let y = g.prelu(v[0], v[1])?;
        weighted(g, y, &w)
    }))?;
    push("sigmoid", max_relative_error(std::slice::from_ref(&a), h, |g, v| {
        let y = g.sigmoid(v[0]);
        weighted(g, y, &w)
    }))?;
    push("tanh", max_relative_error(std::slice::from_ref(&a), h, |g, v| {
        let y = g.tanh(v[0]);
        weighted(g, y, &w)
    }))?;
    let p = random(&[3, 4], &mut rng, 0.5, 2.0);
    push("sqrt", max_relative_error(std::slice::from_ref(&p), h, |g, v| {
        let y = g.sqrt(v[0]);
        weighted(g, y, &w)
    }))?;
    push("log10", max_relative_error(std::slice::from_ref(&p), h, |g, v| {
        let y = g.log10(v[0]);
        weighted(g, y, &w)
    }))?;
    push("clamp_min", max_relative_error(std::slice::from_ref(&s), h, |g, v| {
        let y = g.clamp_min(v[0], 0.05);
        weighted(g, y, &w)
    }))?;
    push("mean", max_relative_error(std::slice::from_ref(&a), h, |g, v| {
        let y = g.mul(v[0], v[0])?;
        Ok(g.mean(y))
    }))?;
    let w_ax = random(&[4], &mut rng, -1.0, 1.0);
    push("sum_axis", max_relative_error(std::slice::from_ref(&a), h, |g, v| {
        let y = g.sum_axis(v[0], 0)?;
        weighted(g, y, &w_ax)
    }))?;
    let w_p = random(&[4, 2, 3], &mut rng, -1.0, 1.0);
    push("reshape-permute", max_relative_error(std::slice::from_ref(&a3), h, |g, v| {
        let y = g.permute(v[0], &[2, 0, 1])?;
        let y = g.reshape(y, &[8, 3])?;
        let y = g.reshape(y, &[4, 2, 3])?;
        weighted(g, y, &w_p)
    }))?;
    let w_c = random(&[3, 5], &mut rng, -1.0, 1.0);
    push("slice-concat", max_relative_error(std::slice::from_ref(&a), h, |g, v| {
        let l = g.slice(v[0], 1, 0, 3)?;
        let r = g.slice(v[0], 1, 2, 4)?;
        let y = g.concat(&[r, l], 1)?;
        weighted(g, y, &w_c)
    }))?;

    let x = random(&[4, 9], &mut rng, -1.0, 1.0);
    let wc = random(&[6, 2, 3], &mut rng, -1.0, 1.0);
    let bc = random(&[6], &mut rng, -1.0, 1.0);
    let wo = random(&[6, 9], &mut rng, -1.0, 1.0);
    for (name, padding, dilation) in [("conv1d-causal", Padding::Causal, 2), ("conv1d-same", Padding::Same, 3)] {
        push(name, max_relative_error(&[x.clone(), wc.clone(), bc.clone()], h, |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), dilation, 2, padding)?;
            weighted(g, y, &wo)
        }))?;
    }

    let sig = random(&[2, 10], &mut rng, -1.0, 1.0);
    let wf = random(&[2, 4, 4], &mut rng, -1.0, 1.0);
    push("frame", max_relative_error(&[sig], h, |g, v| {
        let y = g.frame(v[0], 2, 4)?;
        weighted(g, y, &wf)
    }))?;
    let wo2 = random(&[2, 10], &mut rng, -1.0, 1.0);
    push("overlap_add", max_relative_error(std::slice::from_ref(&wf), h, |g, v| {
        let y = g.overlap_add(v[0], 2)?;
        weighted(g, y, &wo2)
    }))?;

    let reference: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let est = Tensor::from_shape_vec(vec![16], reference.iter().map(|r| r + rng.gen_range(-0.5..0.5)).collect())
        .expect("16");
    push("si_sdr", max_relative_error(&[est], h, |g, v| g.si_sdr(v[0], &reference)))?;

    let ln = random(&[3, 5], &mut rng, -1.0, 1.0);
    let wl = random(&[3, 5], &mut rng, -1.0, 1.0);
    push("layer_norm", max_relative_error(&[ln], h, |g, v| {
        let y = layer_norm(g, v[0])?;
        weighted(g, y, &wl)
    }))?;

    let width = 8;
    let xp = random(&[2, 3 * width], &mut rng, -1.0, 1.0);
    let h0 = random(&[2, width], &mut rng, -1.0, 1.0);
    let w_hh = random(&[width, 3 * width], &mut rng, -0.5, 0.5);
    let b_hh = random(&[3 * width], &mut rng, -0.5, 0.5);
    let wg = random(&[2, width], &mut rng, -1.0, 1.0);
    push("gru_cell", max_relative_error(&[xp, h0, w_hh, b_hh], h, |g, v| {
        let y = gru_cell(g, v[0], v[1], v[2], v[3], width)?;
        weighted(g, y, &wg)
    }))?;

    let xs = random(&[2, 5, 3 * width], &mut rng, -1.0, 1.0);
    let w_hh = random(&[width, 3 * width], &mut rng, -0.5, 0.5);
    let b_hh = random(&[3 * width], &mut rng, -0.5, 0.5);
    let ws = random(&[2, 5, width], &mut rng, -1.0, 1.0);
    push("gru_sequence", max_relative_error(&[xs, w_hh, b_hh], h, |g, v| {
        let y = g.gru_sequence(v[0], v[1], v[2])?;
        weighted(g, y, &ws)
    }))?;
    Ok(out)
}

/// Finite-difference check of the gradient of a scalar with respect to
/// every parameter of `store` that the graph touches. Returns the relative
/// error per parameter tensor and over all parameters jointly.
pub fn param_gradient_errors<F>(store: &ParamStore, h: f64, f: F) -> Result<(Vec<(String, f64)>, f64)>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(store, &mut g)?;
    let grads = g.backward(out)?;
    let analytic = g.param_gradients(&grads);
    let mut work = store.clone();
    let mut per = Vec::new();
    let (mut tot_d, mut tot_a, mut tot_n) = (0.0, 0.0, 0.0);
    for (id, ana) in analytic {
        let (mut d2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for i in 0..ana.len() {
            let orig = store.value(id).as_slice_memory_order().expect("contiguous")[i];
            work.value_mut(id).as_slice_memory_order_mut().expect("contiguous")[i] = orig + h;
            let mut gu = Graph::new();
            let v = f(&work, &mut gu)?;
            let up = gu.scalar(v);
            work.value_mut(id).as_slice_memory_order_mut().expect("contiguous")[i] = orig - h;
            let mut gd = Graph::new();
            let v = f(&work, &mut gd)?;
            let down = gd.scalar(v);
            work.value_mut(id).as_slice_memory_order_mut().expect("contiguous")[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = ana.as_slice_memory_order().expect("contiguous")[i];
            d2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        tot_d += d2;
        tot_a += a2;
        tot_n += n2;
        let scale = f64::max(a2.sqrt(), n2.sqrt());
        per.push((store.name(id).to_string(), if scale > 0.0 { d2.sqrt() / scale } else { 0.0 }));
    }
    let scale = f64::max(tot_a.sqrt(), tot_n.sqrt());
    Ok((per, if scale > 0.0 { tot_d.sqrt() / scale } else { 0.0 }))
}
