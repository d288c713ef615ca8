use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Concatenates along the channel axis, in argument order.
pub fn channel_concat<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let Some(first) = parts.first() else {
        return shape_err("channel_concat", "no tensors to concatenate");
    };
    let base = first.shape();
    for p in parts {
        if !p.shape().same_nhw(&base) {
            return shape_err("channel_concat", format!("{} does not match {}", p.shape(), base));
        }
    }
    let channels = parts.iter().map(|p| p.shape().c).sum();
    let mut out = Tensor::zeros(base.with_c(channels));
    for n in 0..base.n {
        let mut c_out = 0;
        for p in parts {
            for c in 0..p.shape().c {
                out.plane_mut(n, c_out).copy_from_slice(p.plane(n, c));
                c_out += 1;
            }
        }
    }
    Ok(out)
}

/// Splits along the channel axis into consecutive groups of `sizes`
/// channels; the inverse of [`channel_concat`].
pub fn channel_split<T: Real>(input: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = input.shape();
    if sizes.iter().sum::<usize>() != s.c || sizes.contains(&0) {
        return shape_err("channel_split", format!("sizes {sizes:?} do not partition {} channels", s.c));
    }
    let mut start = 0;
    let mut out = Vec::with_capacity(sizes.len());
    for &k in sizes {
        let mut part = Tensor::zeros(s.with_c(k));
        for n in 0..s.n {
            for c in 0..k {
                part.plane_mut(n, c).copy_from_slice(input.plane(n, start + c));
            }
        }
        out.push(part);
        start += k;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn single_part_is_identity() {
        let a = Tensor::<f32>::from_fn(Shape::new(2, 3, 2, 2), |n, c, y, x| (n * 100 + c * 10 + y * 2 + x) as f32);
        assert_eq!(channel_concat(&[&a]).unwrap(), a);
    }

    #[test]
    fn ordering_contract() {
        let a = Tensor::<f32>::full(Shape::new(1, 2, 3, 3), 1.0);
        let b = Tensor::<f32>::full(Shape::new(1, 3, 3, 3), 2.0);
        let c = channel_concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape().c, 5);
        for ch in 0..5 {
            let want = if ch < 2 { 1.0 } else { 2.0 };
            assert!(c.plane(0, ch).iter().all(|&v| v == want));
        }
    }

    #[test]
    fn split_then_concat_round_trips() {
        let a = Tensor::<f64>::from_fn(Shape::new(2, 6, 3, 2), |n, c, y, x| (n + 7 * c + 3 * y + x) as f64);
        let parts = channel_split(&a, &[1, 3, 2]).unwrap();
        let refs: Vec<_> = parts.iter().collect();
        assert_eq!(channel_concat(&refs).unwrap(), a);
        assert!(channel_split(&a, &[2, 2]).is_err());
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 3));
        let b = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 4));
        assert!(channel_concat(&[&a, &b]).is_err());
    }
}
