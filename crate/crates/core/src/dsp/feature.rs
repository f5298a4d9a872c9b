use crate::error::{Error, Result};

/// A `bins x frames x channels` array of features.
///
/// Storage is channel-major, then frame, then bin (bin varies fastest),
/// matching the feature cache layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub bins: usize,
    pub frames: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(bins: usize, frames: usize, channels: usize) -> Self {
        Self {
            bins,
            frames,
            channels,
            data: vec![0.0; bins * frames * channels],
        }
    }

    pub fn from_vec(bins: usize, frames: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != bins * frames * channels {
            return Err(Error::shape(format!(
                "{} values cannot fill a {bins}x{frames}x{channels} feature map",
                data.len()
            )));
        }
        Ok(Self {
            bins,
            frames,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, bin: usize, frame: usize, channel: usize) -> usize {
        (channel * self.frames + frame) * self.bins + bin
    }

    #[inline]
    pub fn get(&self, bin: usize, frame: usize, channel: usize) -> f64 {
        self.data[self.index(bin, frame, channel)]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, channel: usize, v: f64) {
        let i = self.index(bin, frame, channel);
        self.data[i] = v;
    }

    /// All bins of one frame in one channel.
    pub fn frame(&self, frame: usize, channel: usize) -> &[f64] {
        let start = self.index(0, frame, channel);
        &self.data[start..start + self.bins]
    }

    pub fn frame_mut(&mut self, frame: usize, channel: usize) -> &mut [f64] {
        let start = self.index(0, frame, channel);
        &mut self.data[start..start + self.bins]
    }

    /// Frames `start..start + len` as a new map.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(Error::shape(format!(
                "frames {start}..{} out of range for {} frames",
                start + len,
                self.frames
            )));
        }
        let mut out = Self::zeros(self.bins, len, self.channels);
        for c in 0..self.channels {
            let src = self.index(0, start, c);
            let dst = out.index(0, 0, c);
            out.data[dst..dst + len * self.bins]
                .copy_from_slice(&self.data[src..src + len * self.bins]);
        }
        Ok(out)
    }

    /// Keep only the first `frames` frames.
    pub fn truncate_frames(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames);
        self.slice_frames(0, frames).expect("in range")
    }

    /// Join maps along time. All inputs must share bins and channels.
    pub fn concat_frames(maps: &[&FeatureMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::data("nothing to concatenate"))?;
        let (bins, channels) = (first.bins, first.channels);
        if let Some(m) = maps.iter().find(|m| m.bins != bins || m.channels != channels) {
            return Err(Error::shape(format!(
                "cannot concatenate {}x{} features onto {bins}x{channels}",
                m.bins, m.channels
            )));
        }
        let frames = maps.iter().map(|m| m.frames).sum();
        let mut out = Self::zeros(bins, frames, channels);
        for c in 0..channels {
            let mut t = 0;
            for m in maps {
                let src = m.index(0, 0, c);
                let dst = out.index(0, t, c);
                out.data[dst..dst + m.frames * bins]
                    .copy_from_slice(&m.data[src..src + m.frames * bins]);
                t += m.frames;
            }
        }
        Ok(out)
    }

    /// Values in network layout: frequency-major, then time, then channel.
    pub fn to_network_layout(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for t in 0..self.frames {
                for (b, &v) in self.frame(t, c).iter().enumerate() {
                    out[(b * self.frames + t) * self.channels + c] = v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_and_slice_agree() {
        let a = FeatureMap::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FeatureMap::from_vec(2, 1, 1, vec![5.0, 6.0]).unwrap();
        let ab = FeatureMap::concat_frames(&[&a, &b]).unwrap();
        assert_eq!(ab.frames, 3);
        assert_eq!(ab.frame(2, 0), &[5.0, 6.0]);
        assert_eq!(ab.slice_frames(1, 2).unwrap().data, vec![3.0, 4.0, 5.0, 6.0]);
        assert!(ab.slice_frames(2, 2).is_err());
    }

    #[test]
    fn network_layout_is_bin_time_channel() {
        let mut f = FeatureMap::zeros(2, 3, 2);
        f.set(1, 2, 1, 7.0);
        let n = f.to_network_layout();
        assert_eq!(n[(3 + 2) * 2 + 1], 7.0);
    }
}
