use psica_core::dpf::{self, SECURITY_BITS};
use psica_core::{DomainPoint, DpfParams, Group, GroupElement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// The point function itself.
fn point_fn(g: &Group, alpha: &DomainPoint, beta: &GroupElement, x: &DomainPoint) -> GroupElement {
    if x == alpha {
        beta.clone()
    } else {
        g.zero()
    }
}

fn random_point<R: Rng>(rng: &mut R, bits: u8) -> DomainPoint {
    DomainPoint::truncate(rng.gen(), bits).unwrap()
}

#[test]
fn ten_thousand_random_triples() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xd9f);
    let groups = [
        Group::default(),
        Group::cyclic(2).unwrap(),
        Group::cyclic(1_000_003).unwrap(),
        Group::new(&[3, 65536, u64::MAX]).unwrap(),
    ];
    for i in 0..10_000 {
        let bits = rng.gen_range(1..=128u8);
        let g = &groups[i % groups.len()];
        let params = DpfParams::new(bits, g.clone()).unwrap();
        let alpha = random_point(&mut rng, bits);
        let beta = g.random(&mut rng);
        // half the probes hit alpha or a one-bit neighbour
        let x = match i % 4 {
            0 => alpha,
            1 => {
                let flip = 1u128 << rng.gen_range(0..bits);
                DomainPoint::new(alpha.value() ^ flip, bits).unwrap()
            }
            _ => random_point(&mut rng, bits),
        };
        let (k0, k1) = dpf::gen(&params, SECURITY_BITS, &alpha, &beta, rng.gen()).unwrap();
        let got = g.add(&k0.eval(&x).unwrap(), &k1.eval(&x).unwrap());
        assert_eq!(got, point_fn(g, &alpha, &beta, &x), "bits={bits} alpha={alpha} x={x}");
    }
}

#[test]
fn exhaustive_small_domains() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    for bits in 1..=10u8 {
        for g in [Group::default(), Group::new(&[5, 7]).unwrap()] {
            let params = DpfParams::new(bits, g.clone()).unwrap();
            for _ in 0..3 {
                let alpha = random_point(&mut rng, bits);
                let beta = g.random(&mut rng);
                let (k0, k1) = dpf::gen(&params, SECURITY_BITS, &alpha, &beta, rng.gen()).unwrap();
                let (all0, all1) = (k0.eval_all().unwrap(), k1.eval_all().unwrap());
                for v in 0..1u128 << bits {
                    let x = DomainPoint::new(v, bits).unwrap();
                    let want = point_fn(&g, &alpha, &beta, &x);
                    assert_eq!(g.add(&k0.eval(&x).unwrap(), &k1.eval(&x).unwrap()), want);
                    assert_eq!(g.add(&all0[v as usize], &all1[v as usize]), want);
                }
            }
        }
    }
}

/// Chi-square statistic of `counts` against a uniform expectation.
fn chi_square(counts: &[u64]) -> (f64, f64) {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum::<f64>();
    let p = 1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat);
    (stat, p)
}

#[test]
fn single_key_outputs_look_uniform() {
    let g = Group::new(&[65536, 16]).unwrap();
    let params = DpfParams::new(10, g.clone()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let alpha = random_point(&mut rng, 10);
    let beta = g.element(&[1, 1]).unwrap();
    let (k0, k1) = dpf::gen(&params, SECURITY_BITS, &alpha, &beta, rng.gen()).unwrap();
    for key in [k0, k1] {
        let outs = key.eval_all().unwrap();
        // component 0 binned by its top 4 bits, component 1 directly
        let mut hi = vec![0u64; 16];
        let mut small = vec![0u64; 16];
        for o in &outs {
            hi[(o.values()[0] >> 12) as usize] += 1;
            small[o.values()[1] as usize] += 1;
        }
        for counts in [hi, small] {
            let (stat, p) = chi_square(&counts);
            assert!(p > 0.001, "chi2={stat} p={p} counts={counts:?}");
        }
    }
}

#[test]
fn key_length_depends_only_on_public_parameters() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for bits in [1u8, 16, 74, 128] {
        for g in [Group::default(), Group::new(&[3, 1 << 40]).unwrap()] {
            let params = DpfParams::new(bits, g.clone()).unwrap();
            let lens: Vec<usize> = (0..20)
                .map(|_| {
                    let (k0, k1) =
                        dpf::gen(&params, SECURITY_BITS, &random_point(&mut rng, bits), &g.random(&mut rng), rng.gen())
                            .unwrap();
                    assert_eq!(k0.to_bytes().len(), k1.to_bytes().len());
                    k0.to_bytes().len()
                })
                .collect();
            assert!(lens.iter().all(|&l| l == params.key_len()));
        }
    }
}
