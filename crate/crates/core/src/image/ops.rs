use super::{clamp_unit, ensure_same_dims, AlphaMask, ImageTensor, RegionSelection};
use crate::error::{Error, Result};
use crate::geometry::RegionEncoding;

/// First-stage composite `M ⊙ warped_ref + (1 − M) ⊙ target`.
pub fn alpha_composite(
    target: &ImageTensor,
    warped_ref: &ImageTensor,
    mask: &AlphaMask,
) -> Result<ImageTensor> {
    ensure_same_dims(target.dims(), warped_ref.dims())?;
    ensure_same_dims(target.dims(), mask.dims())?;
    let mut data = Vec::with_capacity(target.data().len());
    for ((t, r), m) in target
        .data()
        .chunks_exact(3)
        .zip(warped_ref.data().chunks_exact(3))
        .zip(mask.data())
    {
        let keep = 1.0 - m;
        for c in 0..3 {
            data.push(clamp_unit(m * r[c] + keep * t[c]));
        }
    }
    ImageTensor::new(target.height(), target.width(), data)
}

/// Adds `M ⊙ offset` to the image with saturating clamp.
pub fn color_offset(img: &ImageTensor, mask: &AlphaMask, offset: [f32; 3]) -> Result<ImageTensor> {
    ensure_same_dims(img.dims(), mask.dims())?;
    if offset.iter().any(|o| !o.is_finite() || o.abs() > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "color offset {offset:?} outside [-1, 1]"
        )));
    }
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let m = mask.get(y, x);
            if m == 0.0 {
                continue;
            }
            let p = img.get(y, x);
            out.set(
                y,
                x,
                [
                    p[0] + m * offset[0],
                    p[1] + m * offset[1],
                    p[2] + m * offset[2],
                ],
            );
        }
    }
    Ok(out)
}

/// One input to [`mask_combine`]: a mask restricted to a region selection
/// evaluated against its region map.
#[derive(Clone, Copy, Debug)]
pub struct MaskEntry<'a> {
    pub mask: &'a AlphaMask,
    pub selection: &'a RegionSelection,
    pub regions: &'a RegionEncoding,
}

/// Per-pixel maximum over entries of each mask restricted to its selection.
pub fn mask_combine(entries: &[MaskEntry<'_>]) -> Result<AlphaMask> {
    let first = entries
        .first()
        .ok_or_else(|| Error::InvalidArgument("mask_combine needs at least one entry".into()))?;
    let dims = first.mask.dims();
    let mut out = vec![0.0f32; dims.0 * dims.1];
    for entry in entries {
        ensure_same_dims(dims, entry.mask.dims())?;
        ensure_same_dims(dims, entry.regions.dims())?;
        let selected = entry.selection.rasterize(entry.regions)?;
        for ((o, v), sel) in out.iter_mut().zip(entry.mask.data()).zip(selected) {
            if sel && *v > *o {
                *o = *v;
            }
        }
    }
    AlphaMask::new(dims.0, dims.1, out)
}

/// Zeroes the selected pixels.
pub fn mask_erase(
    mask: &AlphaMask,
    selection: &RegionSelection,
    regions: &RegionEncoding,
) -> Result<AlphaMask> {
    ensure_same_dims(mask.dims(), regions.dims())?;
    let selected = selection.rasterize(regions)?;
    let data = mask
        .data()
        .iter()
        .zip(selected)
        .map(|(v, sel)| if sel { 0.0 } else { *v })
        .collect();
    AlphaMask::new(mask.height(), mask.width(), data)
}

/// Multiplies by `factor ≥ 0` and clamps to `[0, 1]`.
pub fn mask_scale(mask: &AlphaMask, factor: f32) -> Result<AlphaMask> {
    if !factor.is_finite() || factor < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "mask scale factor must be finite and >= 0, got {factor}"
        )));
    }
    Ok(AlphaMask::from_fn(mask.height(), mask.width(), |y, x| {
        mask.get(y, x) * factor
    }))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::image::Region;

    fn stripes(h: usize, w: usize) -> RegionEncoding {
        // rows cycle lips, eyes, skin, other
        let labels = (0..h * w)
            .map(|i| Region::ALL[(i / w) % 4])
            .collect::<Vec<_>>();
        RegionEncoding::from_labels(h, w, &labels).unwrap()
    }

    #[test]
    fn composite_identities_are_exact() {
        let t = ImageTensor::from_fn(3, 4, |y, x| [0.1 * x as f32, 0.3, 0.07 * y as f32]);
        let r = ImageTensor::from_fn(3, 4, |y, x| [0.9, 0.05 * (x + y) as f32, 0.77]);
        assert_eq!(alpha_composite(&t, &r, &AlphaMask::zeros(3, 4)).unwrap(), t);
        assert_eq!(
            alpha_composite(&t, &r, &AlphaMask::filled(3, 4, 1.0)).unwrap(),
            r
        );
    }

    #[test]
    fn composite_single_pixel_quarter() {
        let t = ImageTensor::filled(1, 1, [0.0; 3]);
        let r = ImageTensor::filled(1, 1, [1.0; 3]);
        let out = alpha_composite(&t, &r, &AlphaMask::filled(1, 1, 0.25)).unwrap();
        assert_eq!(out.get(0, 0), [0.25; 3]);
    }

    #[test]
    fn composite_dimension_mismatch() {
        let t = ImageTensor::filled(2, 2, [0.0; 3]);
        let r = ImageTensor::filled(2, 3, [0.0; 3]);
        assert!(matches!(
            alpha_composite(&t, &r, &AlphaMask::zeros(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(alpha_composite(&t, &t, &AlphaMask::zeros(1, 2)).is_err());
    }

    #[test]
    fn color_offset_cases() {
        let img = ImageTensor::from_fn(2, 2, |y, x| [0.2 * x as f32, 0.5, 0.3 * y as f32]);
        let full = AlphaMask::filled(2, 2, 1.0);
        assert_eq!(color_offset(&img, &full, [0.0; 3]).unwrap(), img);
        assert_eq!(
            color_offset(&img, &AlphaMask::zeros(2, 2), [0.5, -0.5, 0.2]).unwrap(),
            img
        );
        let one = ImageTensor::filled(1, 1, [0.9; 3]);
        let out = color_offset(&one, &AlphaMask::filled(1, 1, 1.0), [0.3; 3]).unwrap();
        assert_eq!(out.get(0, 0), [1.0; 3]);
        assert!(color_offset(&one, &AlphaMask::filled(1, 1, 1.0), [1.5, 0.0, 0.0]).is_err());
        assert!(color_offset(&one, &AlphaMask::zeros(2, 1), [0.0; 3]).is_err());
    }

    #[test]
    fn combine_disjoint_regions() {
        let regions = stripes(8, 3);
        let a = AlphaMask::from_fn(8, 3, |y, x| 0.1 + 0.05 * (y + x) as f32);
        let b = AlphaMask::from_fn(8, 3, |y, _| 0.9 - 0.1 * y as f32);
        let lips = RegionSelection::of(&[Region::Lips]);
        let eyes = RegionSelection::of(&[Region::Eyes]);
        let out = mask_combine(&[
            MaskEntry {
                mask: &a,
                selection: &lips,
                regions: &regions,
            },
            MaskEntry {
                mask: &b,
                selection: &eyes,
                regions: &regions,
            },
        ])
        .unwrap();
        // brute force: max of the two restricted masks
        for y in 0..8 {
            for x in 0..3 {
                let ra = if regions.contains(Region::Lips, y, x) {
                    a.get(y, x)
                } else {
                    0.0
                };
                let rb = if regions.contains(Region::Eyes, y, x) {
                    b.get(y, x)
                } else {
                    0.0
                };
                assert_eq!(out.get(y, x), ra.max(rb));
            }
        }
    }

    #[test]
    fn combine_single_entry_all_and_idempotence() {
        let regions = stripes(4, 4);
        let m = AlphaMask::from_fn(4, 4, |y, x| (y * 4 + x) as f32 / 15.0);
        let all = RegionSelection::all();
        let out = mask_combine(&[MaskEntry {
            mask: &m,
            selection: &all,
            regions: &regions,
        }])
        .unwrap();
        assert_eq!(out, m);

        let skin = RegionSelection::of(&[Region::Skin]).with_freehand([(0, 0)]);
        let e = MaskEntry {
            mask: &m,
            selection: &skin,
            regions: &regions,
        };
        let once = mask_combine(&[e]).unwrap();
        assert_eq!(mask_combine(&[e, e]).unwrap(), once);
        assert_eq!(once.get(0, 0), m.get(0, 0));
        assert_eq!(once.get(0, 1), 0.0);
    }

    #[test]
    fn combine_errors() {
        let regions = stripes(4, 4);
        let m = AlphaMask::zeros(4, 4);
        let small = AlphaMask::zeros(3, 4);
        let all = RegionSelection::all();
        assert!(mask_combine(&[]).is_err());
        assert!(mask_combine(&[
            MaskEntry {
                mask: &m,
                selection: &all,
                regions: &regions
            },
            MaskEntry {
                mask: &small,
                selection: &all,
                regions: &regions
            },
        ])
        .is_err());
        let outside = RegionSelection::empty().with_freehand([(9, 9)]);
        assert!(mask_combine(&[MaskEntry {
            mask: &m,
            selection: &outside,
            regions: &regions
        }])
        .is_err());
    }

    #[test]
    fn erase_and_scale() {
        let regions = stripes(4, 2);
        let m = AlphaMask::filled(4, 2, 0.6);
        assert_eq!(
            mask_erase(&m, &RegionSelection::empty(), &regions).unwrap(),
            m
        );
        let erased = mask_erase(&m, &RegionSelection::of(&[Region::Lips]), &regions).unwrap();
        assert_eq!(erased.get(0, 0), 0.0);
        assert_eq!(erased.get(1, 0), 0.6);
        assert_eq!(mask_scale(&m, 0.0).unwrap(), AlphaMask::zeros(4, 2));
        assert_eq!(mask_scale(&m, 2.0).unwrap().get(2, 1), 1.0);
        assert!(mask_scale(&m, -1.0).is_err());
        assert!(mask_erase(&AlphaMask::zeros(2, 2), &RegionSelection::all(), &regions).is_err());
    }

    fn mask_strategy(n: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(0.0f32..=1.0, n)
    }

    proptest! {
        #[test]
        fn composite_is_affine_in_mask(
            t in mask_strategy(12), r in mask_strategy(12),
            m1 in mask_strategy(4), m2 in mask_strategy(4), lambda in 0.0f32..=1.0,
        ) {
            let t = ImageTensor::new(2, 2, t).unwrap();
            let r = ImageTensor::new(2, 2, r).unwrap();
            let a = AlphaMask::new(2, 2, m1).unwrap();
            let b = AlphaMask::new(2, 2, m2).unwrap();
            let mix = AlphaMask::from_fn(2, 2, |y, x| lambda * a.get(y, x) + (1.0 - lambda) * b.get(y, x));
            let lhs = alpha_composite(&t, &r, &mix).unwrap();
            let ca = alpha_composite(&t, &r, &a).unwrap();
            let cb = alpha_composite(&t, &r, &b).unwrap();
            for (i, v) in lhs.data().iter().enumerate() {
                let rhs = lambda * ca.data()[i] + (1.0 - lambda) * cb.data()[i];
                prop_assert!((v - rhs).abs() <= 1e-6);
            }
        }

        #[test]
        fn combine_is_commutative_and_associative(
            a in mask_strategy(16), b in mask_strategy(16), c in mask_strategy(16),
            sa in 0usize..16, sb in 0usize..16, sc in 0usize..16,
        ) {
            let regions = stripes(4, 4);
            let masks = [a, b, c].map(|v| AlphaMask::new(4, 4, v).unwrap());
            let sels = [sa, sb, sc].map(|bits| {
                let chosen: Vec<Region> = Region::ALL.iter().copied()
                    .filter(|r| bits & (1 << r.index()) != 0).collect();
                RegionSelection::of(&chosen)
            });
            let e = |i: usize| MaskEntry { mask: &masks[i], selection: &sels[i], regions: &regions };
            let abc = mask_combine(&[e(0), e(1), e(2)]).unwrap();
            prop_assert_eq!(&abc, &mask_combine(&[e(2), e(0), e(1)]).unwrap());
            let ab = mask_combine(&[e(0), e(1)]).unwrap();
            let all = RegionSelection::all();
            let nested = mask_combine(&[
                MaskEntry { mask: &ab, selection: &all, regions: &regions },
                e(2),
            ]).unwrap();
            prop_assert_eq!(abc, nested);
        }
    }
}
