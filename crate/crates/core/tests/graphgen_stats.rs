use hyperdiff::graph::GraphData;
use hyperdiff::graphgen::{gen_ba, gen_community, gen_sbm};

fn split_density(g: &GraphData, same: impl Fn(usize, usize) -> bool) -> ((usize, usize), (usize, usize)) {
    let (mut intra, mut inter) = ((0, 0), (0, 0));
    for i in 0..g.n {
        for j in i + 1..g.n {
            if same(i, j) {
                intra.1 += 1;
            } else {
                inter.1 += 1;
            }
        }
    }
    for &(i, j) in &g.edges {
        if same(i, j) {
            intra.0 += 1;
        } else {
            inter.0 += 1;
        }
    }
    (intra, inter)
}

fn within_3_sigma(hits: usize, trials: usize, p: f64) -> bool {
    let mean = hits as f64 / trials as f64;
    (mean - p).abs() <= 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn sbm_block_densities() {
    let g = gen_sbm(1000, &[200; 5], 0.21, 0.025, 11).unwrap();
    let labels = g.labels.clone().unwrap();
    let ((e_in, p_in), (e_out, p_out)) = split_density(&g, |i, j| labels[i] == labels[j]);
    let d_in = e_in as f64 / p_in as f64;
    assert!((0.19..=0.23).contains(&d_in), "intra density {d_in}");
    assert!(within_3_sigma(e_in, p_in, 0.21));
    assert!(within_3_sigma(e_out, p_out, 0.025));
}

#[test]
fn ba_degree_tail_is_power_law() {
    let g = gen_ba(2000, 1..=10, 5).unwrap();
    let deg = g.degrees();
    let n = deg.len() as f64;
    // empirical CCDF at each distinct degree above the attachment range,
    // keeping only points backed by at least 10 nodes
    let mut ds: Vec<usize> = deg.iter().copied().filter(|&d| d >= 10).collect();
    ds.sort_unstable();
    ds.dedup();
    let pts: Vec<(f64, f64)> = ds
        .iter()
        .map(|&d| (d, deg.iter().filter(|&&x| x >= d).count()))
        .filter(|&(_, c)| c >= 10)
        .map(|(d, c)| ((d as f64).ln(), (c as f64 / n).ln()))
        .collect();
    assert!(pts.len() >= 10);
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((-3.5..=-1.5).contains(&slope), "slope {slope}");
}

#[test]
fn community_within_half_density() {
    let graphs = gen_community(500, 12..=20, 0.3, 0.05, 3).unwrap();
    let (mut hits, mut trials) = (0, 0);
    for g in &graphs {
        assert!((12..=20).contains(&g.n));
        let half = g.n / 2;
        let ((e_in, p_in), (e_out, _)) = split_density(g, |i, j| (i < half) == (j < half));
        hits += e_in;
        trials += p_in;
        assert_eq!(e_out, (0.05 * g.n as f64).ceil() as usize);
    }
    assert!(within_3_sigma(hits, trials, 0.3), "density {}", hits as f64 / trials as f64);
}
