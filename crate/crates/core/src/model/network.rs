use cidn_tensor::{PadMode, Var};

use super::params::{Bound, LayerTable};
use super::{ArchConfig, Domain, BRIGHTNESS_DIM, NUM_SCALES};

const SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-5;

impl ArchConfig {
    pub fn content_channels(&self) -> usize {
        4 * self.base_channels
    }

    pub(crate) fn layer_table(&self) -> LayerTable {
        let b = self.base_channels;
        let c = self.content_channels();
        let d = BRIGHTNESS_DIM;
        let mut t = LayerTable::default();

        t.conv("enc_c.in", 3, b, 7);
        t.conv("enc_c.down1", b, 2 * b, 4);
        t.conv("enc_c.down2", 2 * b, c, 4);
        for i in 0..self.res_blocks {
            t.conv(&format!("enc_c.res{i}.conv1"), c, c, 3);
            t.conv(&format!("enc_c.res{i}.conv2"), c, c, 3);
        }

        t.conv("enc_b.down1", 3, b, 4);
        t.conv("enc_b.down2", b, 2 * b, 4);
        t.conv("enc_b.down3", 2 * b, c, 4);
        t.conv("enc_b.down4", c, c, 4);
        t.linear("enc_b.mu", c, d);
        t.linear("enc_b.logvar", c, d);

        for dom in ["dec_x", "dec_y"] {
            t.conv(&format!("{dom}.in"), c + d, c, 3);
            for i in 0..self.res_blocks {
                t.conv(&format!("{dom}.res{i}.conv1"), c + d, c, 3);
                t.conv(&format!("{dom}.res{i}.conv2"), c, c, 3);
            }
            t.conv(&format!("{dom}.up1"), c, 2 * b, 3);
            t.conv(&format!("{dom}.up2"), 2 * b, b, 3);
            t.conv(&format!("{dom}.out"), b, 3, 7);
        }

        let f = self.disc_channels;
        for dom in ["dis_x", "dis_y"] {
            for k in 0..NUM_SCALES {
                t.conv(&format!("{dom}.{k}.conv1"), 3, f, 4);
                t.conv(&format!("{dom}.{k}.conv2"), f, 2 * f, 4);
                t.conv(&format!("{dom}.{k}.conv3"), 2 * f, 4 * f, 4);
                t.conv(&format!("{dom}.{k}.score"), 4 * f, 1, 3);
            }
        }
        t
    }
}

/// Forward computations over NCHW batches with bound parameters.
///
/// Works identically on constants (inference) and tracked leaves
/// (training); the caller decides by how the parameters were bound.
pub struct Network<'a> {
    arch: ArchConfig,
    params: &'a Bound,
}

impl<'a> Network<'a> {
    pub fn new(arch: ArchConfig, params: &'a Bound) -> Self {
        Network { arch, params }
    }

    fn pad_mode(&self) -> PadMode {
        self.arch.padding.into()
    }

    fn conv(&self, name: &str, x: &Var<f32>, stride: usize, pad: usize) -> Var<f32> {
        let w = self.params.var(&format!("{name}.weight"));
        let b = self.params.var(&format!("{name}.bias"));
        x.pad_same(pad, self.pad_mode()).conv2d(w, Some(b), stride)
    }

    /// `[n, 3, h, w]` -> `[n, 4b, h/4, w/4]`.
    pub fn content(&self, x: &Var<f32>) -> Var<f32> {
        let norm_act = |v: Var<f32>| v.instance_norm(NORM_EPS).leaky_relu(SLOPE);
        let mut h = norm_act(self.conv("enc_c.in", x, 1, 3));
        h = norm_act(self.conv("enc_c.down1", &h, 2, 1));
        h = norm_act(self.conv("enc_c.down2", &h, 2, 1));
        for i in 0..self.arch.res_blocks {
            let r = norm_act(self.conv(&format!("enc_c.res{i}.conv1"), &h, 1, 1));
            let r = self
                .conv(&format!("enc_c.res{i}.conv2"), &r, 1, 1)
                .instance_norm(NORM_EPS);
            h = h.add(&r);
        }
        h
    }

    /// `[n, 3, h, w]` -> (`mu`, `logvar`), each `[n, 8]`.
    pub fn brightness(&self, x: &Var<f32>) -> (Var<f32>, Var<f32>) {
        let mut h = x.clone();
        for name in ["enc_b.down1", "enc_b.down2", "enc_b.down3", "enc_b.down4"] {
            h = self.conv(name, &h, 2, 1).leaky_relu(SLOPE);
        }
        let pooled = h.global_avg_pool();
        let head = |name: &str| {
            pooled.linear(
                self.params.var(&format!("{name}.weight")),
                self.params.var(&format!("{name}.bias")),
            )
        };
        (head("enc_b.mu"), head("enc_b.logvar"))
    }

    /// Content `[n, 4b, h, w]` plus code `[n, 8]` -> image `[n, 3, 4h, 4w]`.
    ///
    /// The code is tiled spatially and concatenated at the decoder input and
    /// at the first convolution of every residual block. Residual inputs are
    /// normalized *before* the concatenation so the spatially constant code
    /// contribution is never normalized away.
    pub fn decode(&self, domain: Domain, content: &Var<f32>, code: &Var<f32>) -> Var<f32> {
        let dom = domain.decoder_prefix();
        let (_, _, h, w) = content.value().dims4();
        let tiled = code.broadcast_spatial(h, w);
        let mut x = self
            .conv(&format!("{dom}.in"), &Var::cat_channels(&[content, &tiled]), 1, 1)
            .leaky_relu(SLOPE);
        for i in 0..self.arch.res_blocks {
            let normed = x.instance_norm(NORM_EPS);
            let r = self
                .conv(
                    &format!("{dom}.res{i}.conv1"),
                    &Var::cat_channels(&[&normed, &tiled]),
                    1,
                    1,
                )
                .leaky_relu(SLOPE);
            let r = self.conv(&format!("{dom}.res{i}.conv2"), &r, 1, 1);
            x = x.add(&r);
        }
        let x = self
            .conv(&format!("{dom}.up1"), &x.upsample_nearest2x(), 1, 1)
            .leaky_relu(SLOPE);
        let x = self
            .conv(&format!("{dom}.up2"), &x.upsample_nearest2x(), 1, 1)
            .leaky_relu(SLOPE);
        self.conv(&format!("{dom}.out"), &x, 1, 3).sigmoid()
    }

    /// Raw (pre-sigmoid) patch scores at full, half and quarter resolution.
    pub fn discriminator_logits(&self, domain: Domain, x: &Var<f32>) -> Vec<Var<f32>> {
        let dom = domain.discriminator_prefix();
        let mut input = x.clone();
        let mut out = Vec::with_capacity(NUM_SCALES);
        for k in 0..NUM_SCALES {
            if k > 0 {
                input = input.avg_pool2x();
            }
            let mut h = input.clone();
            for layer in ["conv1", "conv2", "conv3"] {
                h = self
                    .conv(&format!("{dom}.{k}.{layer}"), &h, 2, 1)
                    .leaky_relu(SLOPE);
            }
            out.push(self.conv(&format!("{dom}.{k}.score"), &h, 1, 1));
        }
        out
    }
}
