//! Small image-plane helpers: separable Gaussian blur, decimation and gradients.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Halves both sides by averaging 2x2 blocks. Unlike keeping every second
    /// pixel this commutes with 90 degree rotations of even-sized planes; the
    /// sample for output pixel `x` sits at input coordinate `2x + 0.5`.
    pub fn decimate(&self) -> Plane {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s = self.at(2 * x, 2 * y)
                    + self.at(2 * x + 1, 2 * y)
                    + self.at(2 * x, 2 * y + 1)
                    + self.at(2 * x + 1, 2 * y + 1);
                data.push(0.25 * s);
            }
        }
        Plane::new(w, h, data)
    }

    pub fn sub(&self, other: &Plane) -> Plane {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Plane::new(self.width, self.height, data)
    }
}

/// Index reflection without repeating the edge pixel (`dcb|abcd|cba`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub(crate) fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let k = kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * row[reflect(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let sy = reflect(y as isize + j as isize - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += kv * src_row[x];
            }
        }
    }
    Plane::new(w, h, out)
}

/// Central-difference gradient magnitude and orientation (`atan2(dy, dx)`, y down).
/// Border pixels use one-sided reflection.
pub(crate) fn gradients(src: &Plane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (src.width, src.height);
    let mut mag = vec![0.0; w * h];
    let mut ori = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xl = reflect(x as isize - 1, w);
            let xr = reflect(x as isize + 1, w);
            let yu = reflect(y as isize - 1, h);
            let yd = reflect(y as isize + 1, h);
            let dx = src.at(xr, y) - src.at(xl, y);
            let dy = src.at(x, yd) - src.at(x, yu);
            mag[y * w + x] = (dx * dx + dy * dy).sqrt();
            ori[y * w + x] = dy.atan2(dx);
        }
    }
    (mag, ori)
}
