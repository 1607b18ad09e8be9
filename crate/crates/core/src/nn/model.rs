//! The two network architectures: a branched verification model and a
//! pointwise-convolution pattern detector.
//!
//! Forward passes return a cache holding every intermediate activation;
//! backward passes consume that cache and accumulate parameter gradients
//! in place. One sample per call; batching is the trainer's loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::num::Real;

use super::layers::{
    global_avg_pool, global_avg_pool_backward, l2_normalize, l2_normalize_backward, relu_backward,
    relu_forward, softmax, Conv1d, Linear,
};

/// A stack of valid 1D convolutions, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack<F> {
    pub layers: Vec<Conv1d<F>>,
}

#[derive(Debug, Clone)]
pub struct StackCache<F> {
    pub input: Vec<F>,
    pub t_in: usize,
    /// Pre-activation output of each layer.
    pub pre: Vec<Vec<F>>,
    /// Post-ReLU output of each layer.
    pub post: Vec<Vec<F>>,
}

impl<F: Real> ConvStack<F> {
    pub fn new(in_ch: usize, channels: &[usize], kernels: &[usize], rng: &mut impl Rng) -> Self {
        assert_eq!(channels.len(), kernels.len(), "channel/kernel count mismatch");
        assert!(!channels.is_empty(), "empty conv stack");
        let mut layers = Vec::with_capacity(channels.len());
        let mut prev = in_ch;
        for (&ch, &k) in channels.iter().zip(kernels) {
            layers.push(Conv1d::new(prev, ch, k, rng));
            prev = ch;
        }
        ConvStack { layers }
    }

    pub fn t_final(&self, t_in: usize) -> usize {
        self.layers.iter().fold(t_in, |t, l| l.t_out(t))
    }

    pub fn forward(&self, x: &[F], t_in: usize) -> StackCache<F> {
        let mut cache =
            StackCache { input: x.to_vec(), t_in, pre: Vec::new(), post: Vec::new() };
        let mut cur = x.to_vec();
        let mut t = t_in;
        for layer in &self.layers {
            let y = layer.forward(&cur, t);
            t = layer.t_out(t);
            let a = relu_forward(&y);
            cur = a.clone();
            cache.pre.push(y);
            cache.post.push(a);
        }
        cache
    }

    pub fn output<'a>(&self, cache: &'a StackCache<F>) -> &'a [F] {
        cache.post.last().expect("forward before output")
    }

    /// `dout` is the gradient at the final ReLU output; returns the input
    /// gradient and accumulates layer gradients.
    pub fn backward(&mut self, cache: &StackCache<F>, dout: &[F]) -> Vec<F> {
        let mut ts = Vec::with_capacity(self.layers.len());
        let mut t = cache.t_in;
        for layer in &self.layers {
            ts.push(t);
            t = layer.t_out(t);
        }
        let mut d = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let dpre = relu_backward(&cache.pre[i], &d);
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            d = self.layers[i].backward(input, &dpre, ts[i]);
        }
        d
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }
}

/// Shape of the branched verification network. Each of the `branches`
/// extractors reads `branch_rows x steps` and emits the final channel count
/// of `conv_channels` after global average pooling; the concatenation feeds
/// the classifier, siamese, and projection heads.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerificationConfig {
    pub branches: usize,
    pub branch_rows: usize,
    pub steps: usize,
    pub conv_channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub embed_dim: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
    pub classes: usize,
}

impl VerificationConfig {
    pub fn new(classes: usize) -> Self {
        VerificationConfig {
            branches: 22,
            branch_rows: 3,
            steps: 50,
            conv_channels: vec![16, 32, 32],
            kernels: vec![5, 5, 3],
            embed_dim: 64,
            proj_hidden: 64,
            proj_dim: 32,
            classes,
        }
    }

    pub fn branch_dim(&self) -> usize {
        *self.conv_channels.last().expect("empty conv stack")
    }

    pub fn trunk_dim(&self) -> usize {
        self.branches * self.branch_dim()
    }

    pub fn input_len(&self) -> usize {
        self.branches * self.branch_rows * self.steps
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let mut per_branch = 0;
        let mut prev = self.branch_rows;
        for (&ch, &k) in self.conv_channels.iter().zip(&self.kernels) {
            per_branch += ch * prev * k + ch;
            prev = ch;
        }
        let trunk = self.trunk_dim();
        self.branches * per_branch
            + trunk * self.classes + self.classes
            + trunk * self.embed_dim + self.embed_dim
            + self.embed_dim * self.proj_hidden + self.proj_hidden
            + self.proj_hidden * self.proj_dim + self.proj_dim
    }
}

#[derive(Debug, Clone)]
pub struct VerificationCache<F> {
    pub branch: Vec<StackCache<F>>,
    pub trunk: Vec<F>,
    pub logits: Vec<F>,
    pub embed: Vec<F>,
    pub proj_pre: Vec<F>,
    pub proj_act: Vec<F>,
    pub z: Vec<F>,
    pub z_norm: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationModel<F> {
    pub config: VerificationConfig,
    pub branches: Vec<ConvStack<F>>,
    pub classifier: Linear<F>,
    pub siamese: Linear<F>,
    pub proj_in: Linear<F>,
    pub proj_out: Linear<F>,
}

impl<F: Real> VerificationModel<F> {
    pub fn new(config: VerificationConfig, rng: &mut impl Rng) -> Self {
        assert!(config.classes >= 2, "classifier needs at least two classes");
        let branches = (0..config.branches)
            .map(|_| ConvStack::new(config.branch_rows, &config.conv_channels, &config.kernels, rng))
            .collect();
        let trunk = config.trunk_dim();
        let classifier = Linear::new(trunk, config.classes, rng);
        let siamese = Linear::new(trunk, config.embed_dim, rng);
        let proj_in = Linear::new(config.embed_dim, config.proj_hidden, rng);
        let proj_out = Linear::new(config.proj_hidden, config.proj_dim, rng);
        VerificationModel { config, branches, classifier, siamese, proj_in, proj_out }
    }

    pub fn forward(&self, x: &[F]) -> VerificationCache<F> {
        let c = &self.config;
        assert_eq!(x.len(), c.input_len(), "verification input shape");
        let last_ch = c.branch_dim();
        let t_final = self.branches[0].t_final(c.steps);
        let mut trunk = Vec::with_capacity(c.trunk_dim());
        let mut caches = Vec::with_capacity(c.branches);
        let per_branch = c.branch_rows * c.steps;
        for (b, stack) in self.branches.iter().enumerate() {
            let cache = stack.forward(&x[b * per_branch..(b + 1) * per_branch], c.steps);
            trunk.extend(global_avg_pool(stack.output(&cache), last_ch, t_final));
            caches.push(cache);
        }
        let logits = self.classifier.forward(&trunk);
        let embed = self.siamese.forward(&trunk);
        let proj_pre = self.proj_in.forward(&embed);
        let proj_act = relu_forward(&proj_pre);
        let proj_raw = self.proj_out.forward(&proj_act);
        let (z, z_norm) = l2_normalize(&proj_raw);
        VerificationCache { branch: caches, trunk, logits, embed, proj_pre, proj_act, z, z_norm }
    }

    /// Full backward pass. `dlogits`, `dembed`, `dz` are the gradients at
    /// the classifier logits, siamese embedding, and normalized projection;
    /// pass zeros for heads a loss does not touch.
    pub fn backward(&mut self, cache: &VerificationCache<F>, dlogits: &[F], dembed: &[F], dz: &[F]) {
        let c = &self.config;
        let mut dtrunk = self.classifier.backward(&cache.trunk, dlogits);
        let dpraw = l2_normalize_backward(&cache.z, cache.z_norm, dz);
        let dact = self.proj_out.backward(&cache.proj_act, &dpraw);
        let dpre = relu_backward(&cache.proj_pre, &dact);
        let mut de = self.proj_in.backward(&cache.embed, &dpre);
        for (g, &extra) in de.iter_mut().zip(dembed) {
            *g += extra;
        }
        let dsiam = self.siamese.backward(&cache.trunk, &de);
        for (a, &b) in dtrunk.iter_mut().zip(&dsiam) {
            *a += b;
        }
        let last_ch = c.branch_dim();
        let t_final = self.branches[0].t_final(c.steps);
        for (b, stack) in self.branches.iter_mut().enumerate() {
            let dgap = &dtrunk[b * last_ch..(b + 1) * last_ch];
            let dout = global_avg_pool_backward(dgap, last_ch, t_final);
            stack.backward(&cache.branch[b], &dout);
        }
    }

    /// Cheap backward for training only the classifier head (frozen
    /// extractor): no gradient flows below the trunk.
    pub fn backward_classifier_only(&mut self, cache: &VerificationCache<F>, dlogits: &[F]) {
        self.classifier.backward(&cache.trunk, dlogits);
    }

    /// Swaps in a freshly initialized classifier head; everything else is
    /// untouched.
    pub fn replace_classifier(&mut self, classes: usize, rng: &mut impl Rng) {
        assert!(classes >= 2, "classifier needs at least two classes");
        self.classifier = Linear::new(self.config.trunk_dim(), classes, rng);
        self.config.classes = classes;
    }

    /// Softmax probability assigned to `class`.
    pub fn class_probability(&self, x: &[F], class: usize) -> F {
        softmax(&self.forward(x).logits)[class]
    }

    pub fn for_each_param(&mut self, mut f: impl FnMut(&str, &mut [F], &mut [F])) {
        for (b, stack) in self.branches.iter_mut().enumerate() {
            for (l, conv) in stack.layers.iter_mut().enumerate() {
                f(&format!("branch{b:02}.conv{l}.w"), &mut conv.w, &mut conv.dw);
                f(&format!("branch{b:02}.conv{l}.b"), &mut conv.b, &mut conv.db);
            }
        }
        f("classifier.w", &mut self.classifier.w, &mut self.classifier.dw);
        f("classifier.b", &mut self.classifier.b, &mut self.classifier.db);
        f("siamese.w", &mut self.siamese.w, &mut self.siamese.dw);
        f("siamese.b", &mut self.siamese.b, &mut self.siamese.db);
        f("proj0.w", &mut self.proj_in.w, &mut self.proj_in.dw);
        f("proj0.b", &mut self.proj_in.b, &mut self.proj_in.db);
        f("proj1.w", &mut self.proj_out.w, &mut self.proj_out.dw);
        f("proj1.b", &mut self.proj_out.b, &mut self.proj_out.db);
    }

    pub fn visit_params(&self, mut f: impl FnMut(&str, &[F])) {
        for (b, stack) in self.branches.iter().enumerate() {
            for (l, conv) in stack.layers.iter().enumerate() {
                f(&format!("branch{b:02}.conv{l}.w"), &conv.w);
                f(&format!("branch{b:02}.conv{l}.b"), &conv.b);
            }
        }
        f("classifier.w", &self.classifier.w);
        f("classifier.b", &self.classifier.b);
        f("siamese.w", &self.siamese.w);
        f("siamese.b", &self.siamese.b);
        f("proj0.w", &self.proj_in.w);
        f("proj0.b", &self.proj_in.b);
        f("proj1.w", &self.proj_out.w);
        f("proj1.b", &self.proj_out.b);
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(|_, _, g| g.fill(F::zero()));
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(|_, p| n += p.len());
        n
    }
}

/// Shape of the pattern detector: pointwise convolutions over the full
/// window, a pointwise 2-class head, global average pooling to logits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PatternNetConfig {
    pub in_channels: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl PatternNetConfig {
    pub fn new(in_channels: usize, steps: usize) -> Self {
        PatternNetConfig { in_channels, steps, hidden: vec![32, 32], classes: 2 }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut prev = self.in_channels;
        for &ch in &self.hidden {
            n += ch * prev + ch;
            prev = ch;
        }
        n + self.classes * prev + self.classes
    }
}

#[derive(Debug, Clone)]
pub struct PatternCache<F> {
    pub stack: StackCache<F>,
    pub logits: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternModel<F> {
    pub config: PatternNetConfig,
    pub stack: ConvStack<F>,
    pub head: Conv1d<F>,
}

impl<F: Real> PatternModel<F> {
    pub fn new(config: PatternNetConfig, rng: &mut impl Rng) -> Self {
        assert_eq!(config.classes, 2, "pattern head is binary");
        assert!(!config.hidden.is_empty(), "need at least one hidden layer");
        let kernels = vec![1; config.hidden.len()];
        let stack = ConvStack::new(config.in_channels, &config.hidden, &kernels, rng);
        let head = Conv1d::new(*config.hidden.last().unwrap(), config.classes, 1, rng);
        PatternModel { config, stack, head }
    }

    pub fn forward(&self, x: &[F]) -> PatternCache<F> {
        let c = &self.config;
        assert_eq!(x.len(), c.in_channels * c.steps, "pattern input shape");
        let cache = self.stack.forward(x, c.steps);
        let head_out = self.head.forward(self.stack.output(&cache), c.steps);
        let logits = global_avg_pool(&head_out, c.classes, c.steps);
        PatternCache { stack: cache, logits }
    }

    pub fn backward(&mut self, cache: &PatternCache<F>, dlogits: &[F]) {
        let c = &self.config;
        let dhead_out = global_avg_pool_backward(dlogits, c.classes, c.steps);
        let dstack_out = self.head.backward(self.stack.output(&cache.stack), &dhead_out, c.steps);
        self.stack.backward(&cache.stack, &dstack_out);
    }

    /// Probability that the window precedes an unlock (class 1).
    pub fn unlock_probability(&self, x: &[F]) -> F {
        softmax(&self.forward(x).logits)[1]
    }

    pub fn for_each_param(&mut self, mut f: impl FnMut(&str, &mut [F], &mut [F])) {
        for (l, conv) in self.stack.layers.iter_mut().enumerate() {
            f(&format!("pw{l}.w"), &mut conv.w, &mut conv.dw);
            f(&format!("pw{l}.b"), &mut conv.b, &mut conv.db);
        }
        f("head.w", &mut self.head.w, &mut self.head.dw);
        f("head.b", &mut self.head.b, &mut self.head.db);
    }

    pub fn visit_params(&self, mut f: impl FnMut(&str, &[F])) {
        for (l, conv) in self.stack.layers.iter().enumerate() {
            f(&format!("pw{l}.w"), &conv.w);
            f(&format!("pw{l}.b"), &conv.b);
        }
        f("head.w", &self.head.w);
        f("head.b", &self.head.b);
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(|_, _, g| g.fill(F::zero()));
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(|_, p| n += p.len());
        n
    }
}
