//! Numpy-style broadcasting: shapes align from the trailing dimension, and a
//! dimension of extent 1 stretches to match its counterpart.

/// Extent of right-aligned dimension `i` when `dims` is padded to `rank`.
fn padded(dims: &[usize], rank: usize, i: usize) -> usize {
    let offset = rank - dims.len();
    if i < offset {
        1
    } else {
        dims[i - offset]
    }
}

/// Broadcast output dims, or `None` when the shapes are incompatible.
pub(crate) fn broadcast_dims(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    (0..rank)
        .map(|i| {
            let (da, db) = (padded(a, rank, i), padded(b, rank, i));
            if da == db {
                Some(da)
            } else if da == 1 {
                Some(db)
            } else if db == 1 {
                Some(da)
            } else {
                None
            }
        })
        .collect()
}

/// Flat index into `src` corresponding to flat index `out_flat` of the
/// broadcast output: coordinates project right-aligned, with stretched
/// (extent 1) dimensions clamped to 0.
pub(crate) fn map_index(out_dims: &[usize], src_dims: &[usize], out_flat: usize) -> usize {
    let rank = out_dims.len();
    let offset = rank - src_dims.len();
    let mut rem = out_flat;
    // Walk dims right to left, building the source flat index as we go.
    let mut src_flat = 0;
    let mut src_stride = 1;
    for i in (0..rank).rev() {
        let coord = rem % out_dims[i];
        rem /= out_dims[i];
        if i >= offset {
            let extent = src_dims[i - offset];
            if extent != 1 {
                src_flat += coord * src_stride;
            }
            src_stride *= extent;
        }
    }
    src_flat
}
