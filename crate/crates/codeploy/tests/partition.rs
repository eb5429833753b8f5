use codeploy::bundled;
use codeploy::coupling::{approach1_plan, CouplingPlan};
use codeploy::model::{CouplingSpec, ProblemSpec, SubsystemSpec};
use codeploy::partition::*;
use codeploy::solver::SolverConfig;
use codeploy::stochprog::{locally_discretized, CrossBlockPolicy};

fn labels_of(p: &Partition, n: usize) -> Vec<usize> {
    p.labels(n)
}

/// Cut couplings weighted by `1 + S_ij`, straight from the plan.
fn cs_oracle(spec: &ProblemSpec, plan: &CouplingPlan, p: &Partition) -> usize {
    let l = labels_of(p, spec.len());
    spec.couplings
        .iter()
        .filter(|c| c.d_coef > 0.0)
        .map(|c| (spec.index_of(&c.dest).unwrap(), spec.index_of(&c.origin).unwrap()))
        .filter(|&(i, j)| l[i] != l[j])
        .map(|(i, j)| 1 + plan.s_coupling[i][j])
        .sum()
}

/// `|B| + 2 * sum_i S_i * prod_{j in B, coupled} min(S_ij, S_j)`.
fn ss_oracle(spec: &ProblemSpec, plan: &CouplingPlan, block: &[usize]) -> usize {
    let m = spec.coupling_matrix();
    let mut sum = 0;
    for &i in block {
        let mut t = spec.subsystems[i].s_own;
        for &j in block {
            if j != i && m[i][j] > 0.0 {
                t *= plan.s_coupling[i][j].min(spec.subsystems[j].s_own);
            }
        }
        sum += t;
    }
    block.len() + 2 * sum
}

/// Best stage-1 capacity of an isolated subsystem. With concave costs the
/// optimum sits at `d1` or at a demand level, so the candidates are
/// enumerated.
fn isolated_oracle(s: &SubsystemSpec) -> f64 {
    let levels: Vec<f64> = if s.s_own == 1 {
        vec![(s.d2_low + s.d2_high) / 2.0]
    } else {
        (0..s.s_own)
            .map(|k| s.d2_low + (s.d2_high - s.d2_low) * k as f64 / (s.s_own - 1) as f64)
            .collect()
    };
    let cost = |x: f64| {
        s.c1 * x.powf(s.alpha)
            + levels
                .iter()
                .map(|d| s.c2 * (d - x).max(0.0).powf(s.alpha))
                .sum::<f64>()
                / levels.len() as f64
    };
    levels
        .iter()
        .copied()
        .chain([s.d1])
        .filter(|&x| x >= s.d1)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap()
}

fn finer_or_equal(fine: &Partition, coarse: &Partition, n: usize) -> bool {
    let (a, b) = (fine.labels(n), coarse.labels(n));
    (0..n).all(|i| (0..n).all(|j| a[i] != a[j] || b[i] == b[j]))
}

#[test]
fn bell_numbers() {
    let counts: Vec<usize> = (0..6).map(|n| set_partitions(n).len()).collect();
    assert_eq!(counts, vec![0, 1, 2, 5, 15, 52]);
    let all = set_partitions(4);
    for (a, pa) in all.iter().enumerate() {
        assert!(pa.check(4).is_ok());
        assert!(all[a + 1..].iter().all(|pb| pb != pa));
    }
}

#[test]
fn parse_and_name() {
    let spec = bundled::case3();
    let p = Partition::parse(&spec, "C|B,A").unwrap();
    assert_eq!(p.blocks, vec![vec![0, 1], vec![2]]);
    assert_eq!(p.name(&spec), "AB-C");
    assert_eq!(Partition::singletons(3).name(&spec), "A-B-C");
    assert_eq!(Partition::single_block(3).name(&spec), "ABC");
    assert!(Partition::parse(&spec, "A,B").is_err());
    assert!(Partition::parse(&spec, "A,B|B,C").is_err());
    assert!(Partition::parse(&spec, "A,B|Z").is_err());
}

#[test]
fn case_study_scores_at_eight() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let want = [("AB-C", 8, vec![66, 17]), ("AC-B", 10, vec![34, 17]), ("BC-A", 10, vec![17, 34])];
    for (text, cs, ss) in want {
        let p = Partition::parse(&spec, &text.replace('-', "|").replace("AB", "A,B").replace("AC", "A,C").replace("BC", "B,C")).unwrap();
        let score = score_partition(&spec, &plan, &p).unwrap();
        assert_eq!(p.name(&spec), text);
        assert_eq!(score.cs, cs, "{text}");
        let mut got = score.ss.clone();
        let mut want_ss = ss.clone();
        got.sort();
        want_ss.sort();
        assert_eq!(got, want_ss, "{text}");
    }
}

#[test]
fn scores_match_oracles_on_every_partition() {
    for s in [2, 4, 8] {
        let spec = bundled::case3().with_scenarios(s);
        let plan = approach1_plan(&spec);
        for p in set_partitions(3) {
            let score = score_partition(&spec, &plan, &p).unwrap();
            assert_eq!(score.cs, cs_oracle(&spec, &plan, &p));
            let ss: Vec<usize> = p.blocks.iter().map(|b| ss_oracle(&spec, &plan, b)).collect();
            assert_eq!(score.ss, ss);
            assert_eq!(score.ss_max, *ss.iter().max().unwrap());
        }
    }
}

#[test]
fn single_block_costs_nothing_and_is_the_whole_program() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let score = score_partition(&spec, &plan, &Partition::single_block(3)).unwrap();
    assert_eq!(score.cs, 0);
    let whole = locally_discretized(&spec, &plan, Default::default()).unwrap();
    assert_eq!(score.ss, vec![whole.n_var()]);
    assert_eq!(score.ss, vec![83]);
}

#[test]
fn refinement_never_lowers_cs_or_raises_ss_max() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let all = set_partitions(3);
    for fine in &all {
        for coarse in &all {
            if finer_or_equal(fine, coarse, 3) {
                let (f, c) = (score_partition(&spec, &plan, fine).unwrap(), score_partition(&spec, &plan, coarse).unwrap());
                assert!(f.cs >= c.cs);
                assert!(f.ss_max <= c.ss_max);
            }
        }
    }
}

#[test]
fn size_bound_picks_ab_c() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let ranked = enumerate_partitions(&spec, &plan, 70).unwrap();
    assert_eq!(ranked[0].name, "AB-C");
    assert!(ranked.iter().all(|r| r.feasible && r.score.ss_max <= 70));
    assert!(ranked.iter().all(|r| r.name != "ABC"));
    let all = score_all(&spec, &plan, 70).unwrap();
    assert_eq!(all.len(), 5);
    assert_eq!(all.iter().filter(|r| !r.feasible).count(), 1);
    let unbounded = enumerate_partitions(&spec, &plan, usize::MAX).unwrap();
    assert_eq!(unbounded[0].name, "ABC");
    assert!(unbounded[0].pareto);
}

#[test]
fn pareto_flags_are_non_dominated() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let ranked = enumerate_partitions(&spec, &plan, usize::MAX).unwrap();
    for r in &ranked {
        let dominated = ranked.iter().any(|o| {
            o.score.cs <= r.score.cs && o.score.ss_max <= r.score.ss_max && (o.score.cs < r.score.cs || o.score.ss_max < r.score.ss_max)
        });
        assert_eq!(r.pareto, !dominated, "{}", r.name);
    }
}

#[test]
fn too_many_subsystems_are_refused() {
    let subsystems = (0..13)
        .map(|k| SubsystemSpec {
            id: format!("s{k}"),
            c1: 1.0,
            c2: 2.0,
            alpha: 0.9,
            d1: 1.0,
            d2_low: 1.0,
            d2_high: 2.0,
            s_own: 1,
        })
        .collect();
    let spec = ProblemSpec::new(subsystems, vec![]);
    assert!(score_all(&spec, &CouplingPlan::default_plan(&spec), usize::MAX).is_err());
}

#[test]
fn zero_coupling_makes_every_cut_free() {
    let mut spec = bundled::case3();
    for c in &mut spec.couplings {
        c.d_coef = 0.0;
    }
    let plan = approach1_plan(&spec);
    for p in set_partitions(3) {
        assert_eq!(score_partition(&spec, &plan, &p).unwrap().cs, 0);
    }
    let report = bottom_up_solve(&spec, &plan, &Partition::singletons(3), Default::default(), CrossBlockPolicy::Drop, &SolverConfig::default()).unwrap();
    let whole = locally_discretized(&spec, &plan, Default::default()).unwrap().solve(&SolverConfig::default()).unwrap();
    for (a, b) in report.stage1.iter().zip(&whole.stage1) {
        assert!((a - b).abs() < 1e-4);
    }
}

#[test]
fn singleton_blocks_match_the_isolated_oracle() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let report = bottom_up_solve(&spec, &plan, &Partition::singletons(3), Default::default(), CrossBlockPolicy::Drop, &SolverConfig::default()).unwrap();
    for (k, s) in spec.subsystems.iter().enumerate() {
        let want = isolated_oracle(s);
        assert!((report.stage1[k] - want).abs() < 1e-4, "{}: {} vs {want}", s.id, report.stage1[k]);
    }
    assert_eq!(report.blocks.len(), 3);
    assert!(report.all_converged);
}

#[test]
fn ab_c_reuses_the_two_subsystem_result() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let report = bottom_up_solve(&spec, &plan, &Partition::parse(&spec, "A,B|C").unwrap(), Default::default(), CrossBlockPolicy::Drop, &SolverConfig::default()).unwrap();
    let two = bundled::case2();
    let alone = locally_discretized(&two, &approach1_plan(&two), Default::default()).unwrap().solve(&SolverConfig::default()).unwrap();
    assert!((report.stage1[0] - alone.stage1[0]).abs() < 1e-6);
    assert!((report.stage1[1] - alone.stage1[1]).abs() < 1e-6);
    assert!((report.stage1[2] - isolated_oracle(&spec.subsystems[2])).abs() < 1e-4);
    assert_eq!(report.blocks[0].n_var, 66);
    assert_eq!(report.blocks[1].n_var, 17);
}

#[test]
fn freezing_raises_capacities() {
    let spec = bundled::case3();
    let plan = approach1_plan(&spec);
    let p = Partition::singletons(3);
    let drop = bottom_up_solve(&spec, &plan, &p, Default::default(), CrossBlockPolicy::Drop, &SolverConfig::default()).unwrap();
    let freeze = bottom_up_solve(&spec, &plan, &p, Default::default(), CrossBlockPolicy::FreezeDeterministic, &SolverConfig::default()).unwrap();
    for (d, f) in drop.stage1.iter().zip(&freeze.stage1) {
        assert!(f >= d);
    }
}

#[test]
fn bottom_up_csv_has_one_row_per_report() {
    let spec = bundled::case3().with_scenarios(2);
    let plan = approach1_plan(&spec);
    let reports: Vec<_> = set_partitions(3)
        .iter()
        .map(|p| bottom_up_solve(&spec, &plan, p, Default::default(), CrossBlockPolicy::Drop, &SolverConfig::default()).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_bottom_up_csv(&spec, &reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "partition,x1_A,x1_B,x1_C,objective_sum,converged");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn asymmetric_coupling_counts_both_directions_separately() {
    let mut spec = bundled::case2().with_scenarios(4);
    spec.couplings = vec![CouplingSpec { dest: "A".into(), origin: "B".into(), d_coef: 0.5 }];
    let plan = approach1_plan(&spec);
    let score = score_partition(&spec, &plan, &Partition::singletons(2)).unwrap();
    assert_eq!(score.cs, 1 + 2);
}
