use std::f64::consts::PI;

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl Window {
    /// Symmetric window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / denom;
                match self {
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl std::str::FromStr for Window {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(Window::Hamming),
            "hann" | "hanning" => Ok(Window::Hann),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            _ => Err(crate::Error::config(format!("unknown window `{s}`"))),
        }
    }
}
