use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

/// Default raster resolution (cells per canvas side).
pub const DEFAULT_RES: usize = 512;

/// Binary paint mask over the unit canvas. Cell `(ix, iy)` covers
/// `[ix/res, (ix+1)/res) x [iy/res, (iy+1)/res)`; `iy` grows with canvas `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrokeRaster {
    res: usize,
    cells: Vec<bool>,
}

impl StrokeRaster {
    pub fn new(res: usize) -> Self {
        assert!(res > 0, "raster resolution must be positive");
        Self {
            res,
            cells: vec![false; res * res],
        }
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.res as f64
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.res + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, painted: bool) {
        self.cells[iy * self.res + ix] = painted;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn painted_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Cell containing canvas point `(x, y)`, if on the canvas.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(0.0..1.0).contains(&x) || !(0.0..1.0).contains(&y) {
            return None;
        }
        let r = self.res as f64;
        Some(((x * r) as usize, (y * r) as usize))
    }

    /// Copy translated by whole cells; paint pushed off the canvas is lost.
    pub fn shifted(&self, dx: isize, dy: isize) -> Self {
        let mut out = Self::new(self.res);
        let n = self.res as isize;
        for iy in 0..n {
            for ix in 0..n {
                if self.get(ix as usize, iy as usize) {
                    let (tx, ty) = (ix + dx, iy + dy);
                    if (0..n).contains(&tx) && (0..n).contains(&ty) {
                        out.set(tx as usize, ty as usize, true);
                    }
                }
            }
        }
        out
    }

    pub fn union_with(&mut self, other: &StrokeRaster) {
        assert_eq!(self.res, other.res);
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
    }

    /// Binary PGM (`P5`), paint black on white, top row is the highest `y`.
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.res, self.res)?;
        let mut buf = Vec::with_capacity(self.res * self.res);
        for iy in (0..self.res).rev() {
            for ix in 0..self.res {
                buf.push(if self.get(ix, iy) { 0u8 } else { 255u8 });
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a binary (`P5`) or ASCII (`P2`) graymap; pixels darker than
    /// half of maxval count as paint.
    pub fn read_pgm<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::format("pgm", "truncated header"));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_string));
        }
        let magic = header[0].as_str();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format("pgm", format!("bad header field '{s}'")))
        };
        let (w, h, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if w != h || w == 0 {
            return Err(Error::format("pgm", format!("expected square image, got {w}x{h}")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::format("pgm", "only 8-bit graymaps are supported"));
        }
        let pixels: Vec<usize> = match magic {
            "P5" => {
                let mut buf = vec![0u8; w * h];
                reader.read_exact(&mut buf)?;
                buf.into_iter().map(usize::from).collect()
            }
            "P2" => {
                let mut rest = String::new();
                reader.read_to_string(&mut rest)?;
                let v = rest
                    .split_whitespace()
                    .map(parse)
                    .collect::<Result<Vec<_>>>()?;
                if v.len() != w * h {
                    return Err(Error::format("pgm", "pixel count mismatch"));
                }
                v
            }
            other => return Err(Error::format("pgm", format!("unsupported magic '{other}'"))),
        };
        let mut raster = Self::new(w);
        for (row, chunk) in pixels.chunks_exact(w).enumerate() {
            let iy = w - 1 - row;
            for (ix, &p) in chunk.iter().enumerate() {
                raster.set(ix, iy, 2 * p < maxval);
            }
        }
        Ok(raster)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let mut r = StrokeRaster::new(16);
        r.set(1, 2, true);
        r.set(15, 15, true);
        let mut bytes = Vec::new();
        r.write_pgm(&mut bytes).unwrap();
        assert_eq!(StrokeRaster::read_pgm(bytes.as_slice()).unwrap(), r);
    }

    #[test]
    fn ascii_pgm() {
        let text = "P2\n# tiny\n2 2\n255\n0 255\n255 255\n";
        let r = StrokeRaster::read_pgm(text.as_bytes()).unwrap();
        assert!(r.get(0, 1));
        assert_eq!(r.painted_count(), 1);
    }

    #[test]
    fn shifting_moves_paint() {
        let mut r = StrokeRaster::new(8);
        r.set(3, 3, true);
        let s = r.shifted(2, -1);
        assert!(s.get(5, 2));
        assert_eq!(s.painted_count(), 1);
        assert_eq!(r.shifted(10, 0).painted_count(), 0);
    }
}
