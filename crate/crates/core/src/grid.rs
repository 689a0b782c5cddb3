//! Dense row-major `H × W × C` storage shared by images, label maps and
//! probability maps.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Grid {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Structure(format!(
                "buffer of {} values does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Grid {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.offset(row, col) + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: T) {
        let o = self.offset(row, col) + ch;
        self.data[o] = value;
    }

    /// All channel values of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let o = self.offset(row, col);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let o = self.offset(row, col);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Copy of columns `[start, start + width)`.
    pub fn columns(&self, start: usize, width: usize) -> Grid<T> {
        assert!(start + width <= self.width, "column range out of bounds");
        let mut data = Vec::with_capacity(self.height * width * self.channels);
        for row in 0..self.height {
            let from = self.offset(row, start);
            data.extend_from_slice(&self.data[from..from + width * self.channels]);
        }
        Grid {
            height: self.height,
            width,
            channels: self.channels,
            data,
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Places column blocks side by side according to their indices.
///
/// Every block must share height, width and channel count, and the indices
/// must be exactly `0..k` in any order.
pub fn reassemble_stripes<T: Copy>(stripes: Vec<(usize, Grid<T>)>) -> Result<Grid<T>> {
    let k = stripes.len();
    if k == 0 {
        return Err(Error::Structure("no stripes to reassemble".into()));
    }
    let (height, sw, channels) = {
        let g = &stripes[0].1;
        (g.height, g.width, g.channels)
    };
    let mut slots: Vec<Option<Grid<T>>> = (0..k).map(|_| None).collect();
    for (index, grid) in stripes {
        if grid.height != height || grid.width != sw || grid.channels != channels {
            return Err(Error::Structure(format!(
                "stripe {index} is {}x{}x{}, expected {height}x{sw}x{channels}",
                grid.height, grid.width, grid.channels
            )));
        }
        if index >= k {
            return Err(Error::Structure(format!(
                "stripe index {index} out of range for {k} stripes"
            )));
        }
        if slots[index].is_some() {
            return Err(Error::Structure(format!("duplicate stripe index {index}")));
        }
        slots[index] = Some(grid);
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(Error::Structure(format!("stripe index {missing} missing")));
    }

    let width = sw * k;
    let mut data = Vec::with_capacity(height * width * channels);
    let row_len = sw * channels;
    for row in 0..height {
        for grid in slots.iter().flatten() {
            data.extend_from_slice(&grid.data[row * row_len..(row + 1) * row_len]);
        }
    }
    Ok(Grid {
        height,
        width,
        channels,
        data,
    })
}
