use std::ops::Range;

use super::DataError;

/// Which split region a timestamp index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Contiguous train/validation/test boundaries over a series of length T:
/// train = [0, train_end), validation = [train_end, val_end), test = [val_end, T).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_end: usize,
    pub val_end: usize,
}

impl SplitSpec {
    pub fn new(train_end: usize, val_end: usize, len: usize) -> Result<Self, DataError> {
        let spec = SplitSpec { train_end, val_end };
        spec.validate(len)?;
        Ok(spec)
    }

    /// Wall-clock split: the first `train_days` for training, the next
    /// `val_days` for validation, the remainder (including any partial
    /// trailing day) for test.
    pub fn from_days(
        train_days: u32,
        val_days: u32,
        interval_seconds: i64,
        len: usize,
    ) -> Result<Self, DataError> {
        if interval_seconds <= 0 || 86_400 % interval_seconds != 0 {
            return Err(DataError::InvalidInterval(interval_seconds));
        }
        let steps_per_day = (86_400 / interval_seconds) as usize;
        SplitSpec::new(
            train_days as usize * steps_per_day,
            (train_days + val_days) as usize * steps_per_day,
            len,
        )
    }

    pub fn validate(&self, len: usize) -> Result<(), DataError> {
        if self.train_end == 0 || self.train_end >= self.val_end || self.val_end >= len {
            return Err(DataError::InvalidSplit {
                train_end: self.train_end,
                val_end: self.val_end,
                len,
            });
        }
        Ok(())
    }

    /// The three index ranges covering [0, len).
    pub fn regions(&self, len: usize) -> Result<(Range<usize>, Range<usize>, Range<usize>), DataError> {
        self.validate(len)?;
        Ok((
            0..self.train_end,
            self.train_end..self.val_end,
            self.val_end..len,
        ))
    }

    pub fn split_of(&self, index: usize) -> Split {
        if index < self.train_end {
            Split::Train
        } else if index < self.val_end {
            Split::Validation
        } else {
            Split::Test
        }
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.train_end
    }
}
