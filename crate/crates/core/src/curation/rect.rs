//! Largest all-ones axis-aligned rectangle in a binary mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `rows x cols` occupancy matrix: `1` is a clean pixel, `0` a detected
/// subtitle or logo pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, cells: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain("mask needs at least one row and one column"));
        }
        if cells.len() != rows * cols {
            return Err(Error::shape(format!("{} cells", rows * cols), format!("{} cells", cells.len())));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::domain("mask cells must be 0 or 1"));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Result<Self> {
        Self::new(rows, cols, vec![value as u8; rows * cols])
    }

    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::domain("ragged mask rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c] == 1
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.cells[r * self.cols + c] = value as u8;
    }

    /// Marks every cell of `rect` (clipped to the mask) as detected.
    pub fn clear_rect(&mut self, rect: &Rect) {
        let bottom = rect.bottom.min(self.rows - 1);
        let right = rect.right.min(self.cols - 1);
        for r in rect.top..=bottom {
            for c in rect.left..=right {
                self.set(r, c, false);
            }
        }
    }

    /// True iff every cell inside `rect` is 1.
    pub fn all_ones(&self, rect: &Rect) -> bool {
        (rect.top..=rect.bottom).all(|r| (rect.left..=rect.right).all(|c| self.get(r, c)))
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, bottom: usize, right: usize) -> Result<Self> {
        if top > bottom || left > right {
            return Err(Error::domain(format!(
                "rect ({top}, {left}, {bottom}, {right}) has negative extent"
            )));
        }
        Ok(Self { top, left, bottom, right })
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn fits(&self, rows: usize, cols: usize) -> bool {
        self.bottom < rows && self.right < cols
    }
}

/// The result of an interior-rectangle search. `degenerate` is set when the
/// mask has no 1 at all, in which case `area` is 0 and `rect` is `(0,0,0,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteriorRect {
    pub rect: Rect,
    pub area: usize,
    pub degenerate: bool,
}

/// Row-by-row histogram heights with monotonic-stack boundaries, `O(rows *
/// cols)`. Among rectangles of equal area the first one found in row-major
/// scan order wins.
pub fn max_interior_rectangle(mask: &BinaryMask) -> InteriorRect {
    let (m, n) = (mask.rows, mask.cols);
    let mut best = 0usize;
    let mut coords = (0, 0, 0, 0);
    let mut heights = vec![0usize; n];
    let mut left = vec![0isize; n];
    let mut right = vec![0isize; n];
    let mut stack: Vec<usize> = Vec::with_capacity(n);

    for i in 0..m {
        let row = &mask.cells[i * n..(i + 1) * n];
        for (h, &cell) in heights.iter_mut().zip(row) {
            *h = if cell == 1 { *h + 1 } else { 0 };
        }

        stack.clear();
        for j in 0..n {
            while stack.last().is_some_and(|&top| heights[j] <= heights[top]) {
                stack.pop();
            }
            left[j] = stack.last().map_or(-1, |&top| top as isize);
            stack.push(j);
        }

        stack.clear();
        for j in (0..n).rev() {
            while stack.last().is_some_and(|&top| heights[j] <= heights[top]) {
                stack.pop();
            }
            right[j] = stack.last().map_or(n as isize, |&top| top as isize);
            stack.push(j);
        }

        for j in 0..n {
            let height = heights[j];
            let width = (right[j] - left[j] - 1) as usize;
            let area = height * width;
            if area > best {
                best = area;
                coords = (i + 1 - height, (left[j] + 1) as usize, i, (right[j] - 1) as usize);
            }
        }
    }

    let (top, left_col, bottom, right_col) = coords;
    InteriorRect {
        rect: Rect {
            top,
            left: left_col,
            bottom,
            right: right_col,
        },
        area: best,
        degenerate: best == 0,
    }
}

/// Largest cell count a brute-force search accepts.
pub const BRUTEFORCE_MAX_CELLS: usize = 10_000;

/// Exhaustive `O(m^2 n^2)` search using 2-D prefix sums. Reference oracle for
/// [`max_interior_rectangle`]; refuses masks above [`BRUTEFORCE_MAX_CELLS`].
pub fn max_interior_rectangle_bruteforce(mask: &BinaryMask) -> Result<InteriorRect> {
    let (m, n) = (mask.rows, mask.cols);
    if m * n > BRUTEFORCE_MAX_CELLS {
        return Err(Error::domain(format!(
            "brute-force search limited to {BRUTEFORCE_MAX_CELLS} cells, mask has {}",
            m * n
        )));
    }
    // zeros[r][c] = number of 0 cells in rows < r, cols < c.
    let mut zeros = vec![vec![0usize; n + 1]; m + 1];
    for r in 0..m {
        for c in 0..n {
            zeros[r + 1][c + 1] =
                zeros[r][c + 1] + zeros[r + 1][c] - zeros[r][c] + (!mask.get(r, c)) as usize;
        }
    }
    let mut best = InteriorRect {
        rect: Rect { top: 0, left: 0, bottom: 0, right: 0 },
        area: 0,
        degenerate: true,
    };
    for top in 0..m {
        for bottom in top..m {
            for left in 0..n {
                for right in left..n {
                    let z = zeros[bottom + 1][right + 1] + zeros[top][left]
                        - zeros[top][right + 1]
                        - zeros[bottom + 1][left];
                    let area = (bottom - top + 1) * (right - left + 1);
                    if z == 0 && area > best.area {
                        best = InteriorRect {
                            rect: Rect { top, left, bottom, right },
                            area,
                            degenerate: false,
                        };
                    }
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones() {
        let mask = BinaryMask::filled(3, 3, true).unwrap();
        let r = max_interior_rectangle(&mask);
        assert_eq!(r.rect, Rect { top: 0, left: 0, bottom: 2, right: 2 });
        assert_eq!(r.area, 9);
        assert!(!r.degenerate);
    }

    #[test]
    fn single_zero_centre() {
        let mask = BinaryMask::from_rows(&[&[1, 1, 1], &[1, 0, 1], &[1, 1, 1]]).unwrap();
        let fast = max_interior_rectangle(&mask);
        assert_eq!(fast.area, 3);
        assert!(mask.all_ones(&fast.rect));
        // Row-major scan meets the top band first.
        assert_eq!(fast.rect, Rect { top: 0, left: 0, bottom: 0, right: 2 });
        assert_eq!(max_interior_rectangle_bruteforce(&mask).unwrap().area, 3);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let mask = BinaryMask::filled(4, 5, false).unwrap();
        let r = max_interior_rectangle(&mask);
        assert_eq!(r.area, 0);
        assert!(r.degenerate);
        assert_eq!(r.rect, Rect { top: 0, left: 0, bottom: 0, right: 0 });
    }

    #[test]
    fn border_zeros() {
        let mut mask = BinaryMask::filled(6, 8, true).unwrap();
        for c in 0..8 {
            mask.set(0, c, false);
            mask.set(5, c, false);
        }
        for r in 0..6 {
            mask.set(r, 0, false);
            mask.set(r, 7, false);
        }
        let r = max_interior_rectangle(&mask);
        assert_eq!(r.rect, Rect { top: 1, left: 1, bottom: 4, right: 6 });
        assert_eq!(r.area, 24);
    }

    #[test]
    fn bruteforce_guard() {
        let mask = BinaryMask::filled(101, 100, true).unwrap();
        assert!(max_interior_rectangle_bruteforce(&mask).is_err());
    }

    #[test]
    fn mask_validation() {
        assert!(BinaryMask::new(0, 3, vec![]).is_err());
        assert!(BinaryMask::new(1, 3, vec![1, 2, 1]).is_err());
        assert!(BinaryMask::new(2, 2, vec![1, 1, 1]).is_err());
        assert!(Rect::new(3, 0, 2, 0).is_err());
    }
}
