use crate::render::Image;

/// Dense `F × H × W × C` tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Option<Self> {
        (shape.iter().product::<usize>() == data.len()).then_some(Self { shape, data })
    }

    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    /// Elements per frame.
    pub fn frame_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    /// Frames `idx` stacked in order.
    pub fn select_frames(&self, idx: &[usize]) -> Tensor4 {
        let mut data = Vec::with_capacity(idx.len() * self.frame_len());
        for &f in idx {
            data.extend_from_slice(self.frame(f));
        }
        Tensor4 {
            shape: [idx.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }

    pub fn concat_frames(parts: &[Tensor4]) -> Option<Tensor4> {
        let first = parts.first()?;
        let inner = [first.shape[1], first.shape[2], first.shape[3]];
        if parts.iter().any(|p| p.shape[1..] != inner) {
            return None;
        }
        let f = parts.iter().map(|p| p.shape[0]).sum();
        Some(Tensor4 {
            shape: [f, inner[0], inner[1], inner[2]],
            data: parts.iter().flat_map(|p| p.data.iter().copied()).collect(),
        })
    }

    pub fn map2(&self, other: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Tensor4 {
        assert_eq!(self.shape, other.shape);
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Rounds every element to the `f32` grid (the wire precision).
    pub fn quantized(mut self) -> Tensor4 {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Stacks RGB renders into a model-range tensor, `x = 2c - 1`.
pub fn images_to_model(images: &[Image]) -> Tensor4 {
    let (w, h) = images.first().map(|i| (i.width, i.height)).unwrap_or((0, 0));
    let mut data = Vec::with_capacity(images.len() * w * h * 3);
    for img in images {
        assert_eq!((img.width, img.height), (w, h), "frames must share a resolution");
        for p in &img.data {
            data.extend(p.iter().map(|c| 2.0 * c - 1.0));
        }
    }
    Tensor4 {
        shape: [images.len(), h, w, 3],
        data,
    }
}

/// Gradient with respect to model-range frames, pulled back to `[0, 1]` images.
pub fn model_grad_to_images(grad: &Tensor4) -> Vec<Image> {
    let [f, h, w, c] = grad.shape;
    assert_eq!(c, 3);
    (0..f)
        .map(|k| Image {
            width: w,
            height: h,
            data: grad.frame(k).chunks_exact(3).map(|p| [2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]).collect(),
        })
        .collect()
}
