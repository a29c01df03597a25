use proptest::prelude::*;
use srrw::graph::parse_edge_list;
use srrw::largest_connected_component;

fn edge_lines() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((0i64..40, 0i64..40), 1..80)
        .prop_map(|pairs| pairs.into_iter().filter(|(a, b)| a != b).collect::<Vec<_>>())
        .prop_filter("need at least one edge", |v| !v.is_empty())
}

fn render(pairs: &[(i64, i64)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a} {b}\n")).collect()
}

fn labelled_edges(g: &srrw::Graph) -> Vec<(i64, i64)> {
    let labels = g.labels();
    let mut out: Vec<(i64, i64)> = g
        .edges()
        .map(|(i, j, _)| {
            let (a, b) = (labels[i], labels[j]);
            (a.min(b), a.max(b))
        })
        .collect();
    out.sort_unstable();
    out
}

proptest! {
    #[test]
    fn degree_sum_is_twice_total_weight(pairs in edge_lines()) {
        let g = parse_edge_list(&render(&pairs)).unwrap();
        let degree_sum: f64 = g.degrees().iter().sum();
        let weight_sum: f64 = g.edges().map(|(_, _, w)| w).sum();
        prop_assert_eq!(degree_sum, 2.0 * weight_sum);
    }

    #[test]
    fn line_order_does_not_change_the_edge_set(
        pairs in edge_lines(),
        keys in prop::collection::vec(any::<u32>(), 80),
    ) {
        let mut shuffled: Vec<(usize, (i64, i64))> = pairs.iter().copied().enumerate().collect();
        shuffled.sort_by_key(|(i, _)| keys[*i]);
        let shuffled: Vec<(i64, i64)> = shuffled.into_iter().map(|(_, p)| p).collect();
        let a = parse_edge_list(&render(&pairs)).unwrap();
        let b = parse_edge_list(&render(&shuffled)).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert_eq!(labelled_edges(&a), labelled_edges(&b));
    }

    #[test]
    fn largest_component_is_connected(pairs in edge_lines()) {
        let g = parse_edge_list(&render(&pairs)).unwrap();
        let lcc = largest_connected_component(&g);
        prop_assert!(lcc.is_connected());
        let biggest = g.components().iter().map(Vec::len).max().unwrap();
        prop_assert_eq!(lcc.node_count(), biggest);
    }
}
