use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvShape};
use super::real::Real;
use super::NetError;

/// Shape of the shared trunk: three conv+pool stages over the map tensor,
/// a flatten projection, a goal projection and two hidden layers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub input_channels: usize,
    pub input_size: usize,
    pub conv_filters: [usize; 3],
    /// Odd square kernel, stride 1, same padding.
    pub kernel: usize,
    pub flatten_units: usize,
    pub goal_inputs: usize,
    pub goal_units: usize,
    pub hidden_units: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_channels: crate::perception::OBS_CHANNELS,
            input_size: crate::perception::MAP_CELLS,
            conv_filters: [32, 64, 64],
            kernel: 3,
            flatten_units: 512,
            goal_inputs: 3,
            goal_units: 3,
            hidden_units: 512,
        }
    }
}

impl ArchConfig {
    pub fn conv_shapes(&self) -> [ConvShape; 3] {
        let mut size = self.input_size;
        let mut in_channels = self.input_channels;
        std::array::from_fn(|i| {
            let shape = ConvShape {
                in_channels,
                out_channels: self.conv_filters[i],
                size,
                kernel: self.kernel,
            };
            in_channels = self.conv_filters[i];
            size /= 2;
            shape
        })
    }

    /// Side length after the three pools.
    pub fn final_size(&self) -> usize {
        self.input_size / 8
    }

    pub fn flatten_inputs(&self) -> usize {
        self.conv_filters[2] * self.final_size() * self.final_size()
    }

    pub fn map_len(&self) -> usize {
        self.input_channels * self.input_size * self.input_size
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.kernel % 2 == 0 || self.final_size() == 0 || self.conv_filters.contains(&0) {
            return Err(NetError::BadArchitecture(format!("{self:?}")));
        }
        Ok(())
    }

    /// Parameters in everything except the output head.
    pub fn trunk_param_count(&self) -> usize {
        let conv: usize = self
            .conv_shapes()
            .iter()
            .map(|s| s.weight_len() + s.out_channels)
            .sum();
        let concat = self.flatten_units + self.goal_units;
        conv + (self.flatten_inputs() + 1) * self.flatten_units
            + (self.goal_inputs + 1) * self.goal_units
            + (concat + 1) * self.hidden_units
            + (self.hidden_units + 1) * self.hidden_units
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dense {
    weight: usize,
    bias: usize,
    inputs: usize,
    outputs: usize,
}

impl Dense {
    fn w(&self) -> Range<usize> {
        self.weight..self.weight + self.inputs * self.outputs
    }

    fn b(&self) -> Range<usize> {
        self.bias..self.bias + self.outputs
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    conv: [(ConvShape, usize, usize); 3],
    flatten: Dense,
    goal: Dense,
    hidden: [Dense; 2],
    head: Dense,
    total: usize,
}

impl Layout {
    fn new(arch: &ArchConfig, outputs: usize) -> Self {
        let mut offset = 0;
        let mut take = |n: usize| {
            let at = offset;
            offset += n;
            at
        };
        let conv = arch.conv_shapes().map(|s| {
            let w = take(s.weight_len());
            let b = take(s.out_channels);
            (s, w, b)
        });
        let mut dense = |inputs: usize, outputs: usize| Dense {
            weight: take(inputs * outputs),
            bias: take(outputs),
            inputs,
            outputs,
        };
        let flatten = dense(arch.flatten_inputs(), arch.flatten_units);
        let goal = dense(arch.goal_inputs, arch.goal_units);
        let hidden = [
            dense(arch.flatten_units + arch.goal_units, arch.hidden_units),
            dense(arch.hidden_units, arch.hidden_units),
        ];
        let head = dense(arch.hidden_units, outputs);
        Self {
            conv,
            flatten,
            goal,
            hidden,
            head,
            total: offset,
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub batch: usize,
    maps: Vec<T>,
    goals: Vec<T>,
    conv_out: [Vec<T>; 3],
    pooled: [Vec<T>; 3],
    pool_idx: [Vec<u32>; 3],
    flat: Vec<T>,
    concat: Vec<T>,
    hidden: [Vec<T>; 2],
    /// Raw head outputs, `batch x outputs`.
    pub output: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Which side of every ReLU and which max-pool winner each unit took.
    /// Two passes with equal patterns ran through the same linear piece of
    /// the network.
    pub fn branch_pattern(&self) -> Vec<u32> {
        let relus = self.conv_out.iter().chain([&self.flat]).chain(self.hidden.iter());
        let mut out: Vec<u32> = relus.flatten().map(|&x| u32::from(x > T::zero())).collect();
        out.extend(self.pool_idx.iter().flatten());
        out
    }
}

/// One trunk plus a linear head of `outputs` units.
///
/// Parameters live in one flat vector in this order: for each conv stage
/// weight `[out][in][ky][kx]` then bias; flatten projection, goal projection,
/// hidden 1, hidden 2 and head, each as weight `[out][in]` then bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Net<T> {
    arch: ArchConfig,
    outputs: usize,
    layout: Layout,
    pub params: Vec<T>,
}

fn orthogonal<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (tall, thin) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, thin, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..thin {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let m = if rows >= cols { q } else { q.transpose() };
    // DMatrix is column-major; emit row-major.
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(gain * m[(i, j)]);
        }
    }
    out
}

impl<T: Real> Net<T> {
    pub fn zeros(arch: &ArchConfig, outputs: usize) -> Self {
        let layout = Layout::new(arch, outputs);
        Self {
            arch: arch.clone(),
            outputs,
            params: vec![T::zero(); layout.total],
            layout,
        }
    }

    /// Orthogonal weights (gain sqrt 2 before ReLUs, 1 on the goal
    /// projection, `head_gain` on the head) and zero biases.
    pub fn initialized<R: Rng>(arch: &ArchConfig, outputs: usize, head_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch, outputs);
        let relu_gain = std::f64::consts::SQRT_2;
        let l = net.layout.clone();
        let mut fill = |net: &mut Self, at: usize, rows: usize, cols: usize, gain: f64| {
            for (i, v) in orthogonal(rows, cols, gain, rng).into_iter().enumerate() {
                net.params[at + i] = T::of(v);
            }
        };
        for (s, w, _) in l.conv {
            fill(&mut net, w, s.out_channels, s.weight_len() / s.out_channels, relu_gain);
        }
        for (d, gain) in [
            (l.flatten, relu_gain),
            (l.goal, 1.0),
            (l.hidden[0], relu_gain),
            (l.hidden[1], relu_gain),
            (l.head, head_gain),
        ] {
            fill(&mut net, d.weight, d.outputs, d.inputs, gain);
        }
        net
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn head_bias_mut(&mut self) -> &mut [T] {
        let r = self.layout.head.b();
        &mut self.params[r]
    }

    pub fn head_weight_mut(&mut self) -> &mut [T] {
        let r = self.layout.head.w();
        &mut self.params[r]
    }

    /// Named parameter blocks in storage order.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        for (i, (s, w, b)) in self.layout.conv.iter().enumerate() {
            out.push((format!("conv{}.weight", i + 1), *w..*w + s.weight_len()));
            out.push((format!("conv{}.bias", i + 1), *b..*b + s.out_channels));
        }
        let l = &self.layout;
        for (name, d) in [
            ("flatten", l.flatten),
            ("goal", l.goal),
            ("hidden1", l.hidden[0]),
            ("hidden2", l.hidden[1]),
            ("head", l.head),
        ] {
            out.push((format!("{name}.weight"), d.w()));
            out.push((format!("{name}.bias"), d.b()));
        }
        out
    }

    pub fn forward(&self, maps: &[T], goals: &[T], batch: usize) -> Result<ForwardCache<T>, NetError> {
        let arch = &self.arch;
        if batch == 0 {
            return Err(NetError::EmptyBatch);
        }
        for (what, data, per) in [("maps", maps, arch.map_len()), ("goals", goals, arch.goal_inputs)] {
            if data.len() != batch * per {
                return Err(NetError::Shape {
                    what,
                    expected: batch * per,
                    got: data.len(),
                });
            }
            if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteInput { what, index });
            }
        }

        let p = &self.params;
        let l = &self.layout;
        let mut conv_out: [Vec<T>; 3] = Default::default();
        let mut pooled: [Vec<T>; 3] = Default::default();
        let mut pool_idx: [Vec<u32>; 3] = Default::default();
        for (i, (s, w, b)) in l.conv.iter().enumerate() {
            let input = if i == 0 { maps } else { &pooled[i - 1] };
            let y = layers::conv_relu_forward(
                s,
                &p[*w..*w + s.weight_len()],
                &p[*b..*b + s.out_channels],
                input,
                batch,
            );
            let (pool, idx) = layers::maxpool_forward(&y, batch, s.out_channels, s.size);
            conv_out[i] = y;
            pooled[i] = pool;
            pool_idx[i] = idx;
        }

        let dense = |d: &Dense, x: &[T], relu: bool| {
            let mut y = layers::linear_forward(&p[d.w()], &p[d.b()], x, batch, d.inputs, d.outputs);
            if relu {
                layers::relu_in_place(&mut y);
            }
            y
        };
        let flat = dense(&l.flatten, &pooled[2], true);
        let goal = dense(&l.goal, goals, false);
        let (fu, gu) = (arch.flatten_units, arch.goal_units);
        let mut concat = Vec::with_capacity(batch * (fu + gu));
        for n in 0..batch {
            concat.extend_from_slice(&flat[n * fu..(n + 1) * fu]);
            concat.extend_from_slice(&goal[n * gu..(n + 1) * gu]);
        }
        let h1 = dense(&l.hidden[0], &concat, true);
        let h2 = dense(&l.hidden[1], &h1, true);
        let output = dense(&l.head, &h2, false);

        Ok(ForwardCache {
            batch,
            maps: maps.to_vec(),
            goals: goals.to_vec(),
            conv_out,
            pooled,
            pool_idx,
            flat,
            concat,
            hidden: [h1, h2],
            output,
        })
    }

    /// Gradient of a loss with respect to every parameter, given the loss
    /// gradient with respect to the head outputs.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &[T]) -> Vec<T> {
        let batch = cache.batch;
        assert_eq!(grad_output.len(), batch * self.outputs);
        let p = &self.params;
        let l = &self.layout;
        let mut grads = vec![T::zero(); l.total];

        let mut dense_back = |d: &Dense, x: &[T], g: &[T], want: bool| {
            let (gw, gb) = {
                let (lo, hi) = grads.split_at_mut(d.bias);
                (&mut lo[d.w()], &mut hi[..d.outputs])
            };
            layers::linear_backward(&p[d.w()], x, g, batch, d.inputs, d.outputs, gw, gb, want)
        };

        let mut g = dense_back(&l.head, &cache.hidden[1], grad_output, true).unwrap();
        layers::relu_mask(&mut g, &cache.hidden[1]);
        let mut g = dense_back(&l.hidden[1], &cache.hidden[0], &g, true).unwrap();
        layers::relu_mask(&mut g, &cache.hidden[0]);
        let g_concat = dense_back(&l.hidden[0], &cache.concat, &g, true).unwrap();

        let (fu, gu) = (self.arch.flatten_units, self.arch.goal_units);
        let mut g_flat = Vec::with_capacity(batch * fu);
        let mut g_goal = Vec::with_capacity(batch * gu);
        for row in g_concat.chunks_exact(fu + gu) {
            g_flat.extend_from_slice(&row[..fu]);
            g_goal.extend_from_slice(&row[fu..]);
        }
        dense_back(&l.goal, &cache.goals, &g_goal, false);
        layers::relu_mask(&mut g_flat, &cache.flat);
        let mut g_map = dense_back(&l.flatten, &cache.pooled[2], &g_flat, true).unwrap();

        for i in (0..3).rev() {
            let (s, w, b) = &l.conv[i];
            let g_conv = layers::maxpool_backward(&g_map, &cache.pool_idx[i], cache.conv_out[i].len());
            let input = if i == 0 { &cache.maps } else { &cache.pooled[i - 1] };
            let (lo, hi) = grads.split_at_mut(*b);
            let gw = &mut lo[*w..*w + s.weight_len()];
            let gb = &mut hi[..s.out_channels];
            let gi = layers::conv_relu_backward(
                s,
                &p[*w..*w + s.weight_len()],
                input,
                &cache.conv_out[i],
                &g_conv,
                batch,
                gw,
                gb,
                i > 0,
            );
            if let Some(gi) = gi {
                g_map = gi;
            }
        }
        grads
    }
}
