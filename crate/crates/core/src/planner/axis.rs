use serde::{Deserialize, Serialize};

/// One window along a single axis. `start..start+len` is read, the
/// `write_start..write_start+write_len` sub-range is committed. Coordinates
/// are unwrapped: on a ring axis they may run past the extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisWindow {
    pub start: isize,
    pub len: usize,
    pub write_start: isize,
    pub write_len: usize,
}

impl AxisWindow {
    fn new(start: isize, len: usize, write_start: isize, write_len: usize) -> Self {
        debug_assert!(write_start >= start && write_start + write_len as isize <= start + len as isize);
        Self {
            start,
            len,
            write_start,
            write_len,
        }
    }
}

/// Exclusive partition of `0..extent` into windows of length `win` shifted by
/// `offset` (`0 <= offset < win <= extent`).
///
/// On a ring the windows start at `offset + i·win`; the last one, if it would
/// run past `offset + extent`, is pulled back to end there and writes only the
/// remainder. Off a ring the strip `0..offset` gets a padding window clamped to
/// the start, and the final window is clamped to the end.
pub(crate) fn exclusive_axis(extent: usize, win: usize, offset: usize, ring: bool) -> Vec<AxisWindow> {
    debug_assert!(win >= 1 && win <= extent && offset < win);
    let (extent_i, win_i, offset_i) = (extent as isize, win as isize, offset as isize);
    let mut out = Vec::new();
    if ring {
        let end = offset_i + extent_i;
        let mut p = offset_i;
        while p < end {
            let write_end = (p + win_i).min(end);
            let start = if write_end - p == win_i { p } else { end - win_i };
            out.push(AxisWindow::new(start, win, p, (write_end - p) as usize));
            p += win_i;
        }
    } else {
        if offset > 0 {
            out.push(AxisWindow::new(0, win, 0, offset));
        }
        let mut p = offset_i;
        while p < extent_i {
            let write_end = (p + win_i).min(extent_i);
            let start = p.min(extent_i - win_i);
            out.push(AxisWindow::new(start, win, p, (write_end - p) as usize));
            p += win_i;
        }
    }
    out
}

/// Overlapping windows on a fixed stride, each writing its full extent.
pub(crate) fn blended_axis(extent: usize, win: usize, stride: usize, ring: bool) -> Vec<AxisWindow> {
    debug_assert!(win >= 1 && win <= extent && stride >= 1 && stride <= win);
    let mut starts: Vec<usize> = if ring {
        (0..extent.div_ceil(stride)).map(|i| i * stride).collect()
    } else {
        let mut s: Vec<usize> = (0..=extent - win).step_by(stride).collect();
        if *s.last().unwrap() != extent - win {
            s.push(extent - win);
        }
        s
    };
    if ring && win == extent {
        starts.truncate(1);
    }
    starts
        .into_iter()
        .map(|s| AxisWindow::new(s as isize, win, s as isize, win))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coverage(ws: &[AxisWindow], extent: usize) -> Vec<u32> {
        let mut c = vec![0; extent];
        for w in ws {
            for k in 0..w.write_len as isize {
                c[(w.write_start + k).rem_euclid(extent as isize) as usize] += 1;
            }
        }
        c
    }

    #[test]
    fn exclusive_partitions_for_all_offsets() {
        for ring in [false, true] {
            for extent in 1..40 {
                for win in 1..=extent {
                    for offset in 0..win {
                        let ws = exclusive_axis(extent, win, offset, ring);
                        assert!(coverage(&ws, extent).iter().all(|&c| c == 1),
                            "ring={ring} extent={extent} win={win} offset={offset}");
                        for w in &ws {
                            assert_eq!(w.len, win);
                            if !ring {
                                assert!(w.start >= 0 && w.start as usize + win <= extent);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn blended_covers_everything() {
        for ring in [false, true] {
            for extent in 1..40 {
                for win in 1..=extent {
                    for stride in 1..=win {
                        let ws = blended_axis(extent, win, stride, ring);
                        assert!(coverage(&ws, extent).iter().all(|&c| c >= 1));
                    }
                }
            }
        }
    }

    #[test]
    fn padding_rows_example() {
        let ws = exclusive_axis(64, 32, 8, false);
        assert_eq!(
            ws,
            vec![
                AxisWindow::new(0, 32, 0, 8),
                AxisWindow::new(8, 32, 8, 32),
                AxisWindow::new(32, 32, 40, 24),
            ]
        );
    }
}
