use aoirelay::plot::{convergence, line_chart, returns_column, surface_series};
use std::collections::BTreeMap;

#[test]
fn convergence_averages_runs_then_smooths() {
    let mut g = BTreeMap::new();
    g.insert("a".to_string(), vec![vec![0.0, 2.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]]);
    let (csv, series) = convergence(&g, 2);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "group,episode,mean_return,smoothed_return");
    assert_eq!(&lines[1..], ["a,0,1,1", "a,1,3,2", "a,2,5,4"]);
    assert_eq!(series[0].points, vec![(0.0, 1.0), (1.0, 2.0), (2.0, 4.0)]);
}

#[test]
fn return_column_is_found_by_name() {
    let csv = "episode,return,x\n0,1.5,9\n1,-2,9\n";
    assert_eq!(returns_column(csv).unwrap(), vec![1.5, -2.0]);
    assert!(returns_column("episode\n0\n").is_err());
}

#[test]
fn surface_series_group_by_lambda() {
    let csv = "ratio,lg_lambda,mean_return,return_retention,params_after\n0.5,-6,1,0.9,10\n0.9,-6,1,0.5,3\n0.5,-5,1,0.8,10\n";
    let s = surface_series(csv).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[1].points, vec![(0.5, 0.9), (0.9, 0.5)]);
}

#[test]
fn charts_are_deterministic_svg() {
    let mut g = BTreeMap::new();
    g.insert("a<b".to_string(), vec![vec![1.0, 3.0, 2.0]]);
    let (_, series) = convergence(&g, 1);
    let a = line_chart("t", "x", "y", &series);
    assert_eq!(a, line_chart("t", "x", "y", &series));
    assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
    assert!(a.contains("a&lt;b"));
}
