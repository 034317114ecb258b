//! Quantized template matrices.
//!
//! Template entries are stored exactly as scaled integers: a value is
//! `scaled * base^(-digits)`. Keeping the representation integral is what
//! makes plan synthesis and evaluation exact, and the number of fractional
//! digits retained is the knob that controls how many distinct coefficient
//! magnitudes (and therefore multiplications) a plan needs.

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::exact::{self, Exact};

/// One fixed-point value: `scaled * base^(-digits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedScalar {
    scaled: i64,
    base: u32,
    digits: u32,
}

impl QuantizedScalar {
    pub fn new(scaled: i64, base: u32, digits: u32) -> Self {
        assert!(base >= 2, "base must be at least 2");
        Self {
            scaled,
            base,
            digits,
        }
    }

    pub fn scaled_value(&self) -> i64 {
        self.scaled
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn scale_digits(&self) -> u32 {
        self.digits
    }

    /// Exact reconstruction, no floating rounding involved.
    pub fn value(&self) -> Exact {
        Exact::new(BigInt::from(self.scaled), exact::pow_big(self.base, self.digits))
    }

    pub fn value_f64(&self) -> f64 {
        exact::exact_to_f64(&self.value())
    }
}

/// Rounds `x` to `digits` fractional digits in `base`, ties to even.
pub fn quantize(x: f64, digits: u32, base: u32) -> Result<QuantizedScalar> {
    if !x.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let exact = exact::exact_from_f64(x)?;
    quantize_exact(&exact, digits, base).map_err(|_| Error::QuantizeOverflow {
        value: x,
        base,
        digits,
    })
}

/// Exact-input variant of [`quantize`]; used when entries come from decimal
/// text rather than floats.
pub fn quantize_exact(x: &Exact, digits: u32, base: u32) -> Result<QuantizedScalar> {
    assert!(base >= 2, "base must be at least 2");
    let scaled_big = exact::round_half_even(&(x * Exact::from_integer(exact::pow_big(base, digits))));
    let scaled = scaled_big.to_i64().ok_or(Error::QuantizeOverflow {
        value: exact::exact_to_f64(x),
        base,
        digits,
    })?;
    Ok(QuantizedScalar::new(scaled, base, digits))
}

/// Scales every row of a real matrix to unit Euclidean norm.
///
/// Runs in real arithmetic and is meant to be applied *before* quantization,
/// so the quantized entries keep the fixed-digit property.
pub fn normalize_rows(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .enumerate()
        .map(|(index, row)| {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNormRow { row: index });
            }
            if !norm.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            Ok(row.iter().map(|x| x / norm).collect())
        })
        .collect()
}

/// A K×m template bank with one shared `(base, digits)` pair.
///
/// Rows are templates, columns are window positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMatrix {
    scaled: Vec<i64>,
    rows: usize,
    cols: usize,
    base: u32,
    digits: u32,
}

impl QuantizedMatrix {
    /// Quantizes a real matrix entry by entry.
    pub fn from_rows_f64(rows: &[Vec<f64>], base: u32, digits: u32) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let cols = rows[0].len();
        let mut scaled = Vec::with_capacity(rows.len() * cols);
        for (index, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::RaggedMatrix {
                    row: index,
                    expected: cols,
                    got: row.len(),
                });
            }
            for &x in row {
                scaled.push(quantize(x, digits, base)?.scaled_value());
            }
        }
        Ok(Self {
            scaled,
            rows: rows.len(),
            cols,
            base,
            digits,
        })
    }

    /// Quantizes exact decimal entries (e.g. parsed from CSV).
    pub fn from_rows_exact(rows: &[Vec<Exact>], base: u32, digits: u32) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let cols = rows[0].len();
        let mut scaled = Vec::with_capacity(rows.len() * cols);
        for (index, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::RaggedMatrix {
                    row: index,
                    expected: cols,
                    got: row.len(),
                });
            }
            for x in row {
                scaled.push(quantize_exact(x, digits, base)?.scaled_value());
            }
        }
        Ok(Self {
            scaled,
            rows: rows.len(),
            cols,
            base,
            digits,
        })
    }

    /// Builds a matrix from already-scaled integers. No rounding happens.
    pub fn from_scaled(rows: &[Vec<i64>], base: u32, digits: u32) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::EmptyMatrix);
        }
        assert!(base >= 2, "base must be at least 2");
        let cols = rows[0].len();
        let mut scaled = Vec::with_capacity(rows.len() * cols);
        for (index, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::RaggedMatrix {
                    row: index,
                    expected: cols,
                    got: row.len(),
                });
            }
            scaled.extend_from_slice(row);
        }
        Ok(Self {
            scaled,
            rows: rows.len(),
            cols,
            base,
            digits,
        })
    }

    /// Row count K (number of templates).
    pub fn k(&self) -> usize {
        self.rows
    }

    /// Column count m (window length).
    pub fn m(&self) -> usize {
        self.cols
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn scaled(&self, row: usize, col: usize) -> i64 {
        self.scaled[row * self.cols + col]
    }

    pub fn entry(&self, row: usize, col: usize) -> QuantizedScalar {
        QuantizedScalar::new(self.scaled(row, col), self.base, self.digits)
    }

    pub fn value(&self, row: usize, col: usize) -> Exact {
        self.entry(row, col).value()
    }

    pub fn value_f64(&self, row: usize, col: usize) -> f64 {
        self.entry(row, col).value_f64()
    }

    /// One row reconstructed exactly.
    pub fn row_values(&self, row: usize) -> Vec<Exact> {
        (0..self.cols).map(|c| self.value(row, c)).collect()
    }

    /// One row as nearest floats.
    pub fn row_values_f64(&self, row: usize) -> Vec<f64> {
        (0..self.cols).map(|c| self.value_f64(row, c)).collect()
    }

    /// Euclidean norm of one row (float domain).
    pub fn row_norm_f64(&self, row: usize) -> f64 {
        (0..self.cols)
            .map(|c| {
                let v = self.value_f64(row, c);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// The common scale `base^(-digits)`.
    pub fn scale(&self) -> Exact {
        Exact::new(BigInt::from(1), exact::pow_big(self.base, self.digits))
    }

    /// The integer matrix plus the common scale; `ints * scale` reconstructs
    /// the matrix exactly.
    pub fn to_scaled_integers(&self) -> (Vec<Vec<i64>>, Exact) {
        let ints = (0..self.rows)
            .map(|r| self.scaled[r * self.cols..(r + 1) * self.cols].to_vec())
            .collect();
        (ints, self.scale())
    }
}
