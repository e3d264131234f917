use sseg::metrics::{edge_error, part_ap, rank_corpus, structure_difference, RetrievalItem, RetrievalMode, AP_IOU_THRESHOLD};
use sseg::pipeline::rule_based;
use sseg::synthio::{gen_dataset, Category, Dataset, GenConfig, Split};

fn config(oversegment_prob: f64) -> GenConfig {
    GenConfig { points: 500, oversegment_prob, ..GenConfig::default() }
}

#[test]
fn dataset_round_trips_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let written = gen_dataset(tmp.path(), Category::Storage, 6, 4, &config(0.5)).unwrap();
    let read = Dataset::open(tmp.path()).unwrap();
    assert_eq!(read.manifest().shapes.len(), 6);
    let all = written.load_split(None).unwrap();
    assert_eq!(all, read.load_split(None).unwrap());
    let test = read.load_split(Some(Split::Test)).unwrap();
    assert_eq!(test.len(), (0..6).filter(|&i| Split::for_index(i) == Split::Test).count());
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), Category::Table, 4, 2, &config(0.0)).unwrap();
    for r in ds.load_split(None).unwrap() {
        let h = &r.gt_hierarchy;
        assert_eq!(part_ap(h, h, AP_IOU_THRESHOLD).unwrap(), 1.0);
        assert_eq!(edge_error(h, h).unwrap(), 0.0);
        assert_eq!(structure_difference(h, h).unwrap(), 0);
    }
}

#[test]
fn rule_based_hierarchies_cover_every_point_once() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), Category::Chair, 5, 7, &config(0.5)).unwrap();
    for r in ds.load_split(None).unwrap() {
        let h = rule_based(r.points(), &r.segments(), ds.taxonomy()).unwrap();
        let mut covered: Vec<usize> = h.leaves().into_iter().flat_map(|l| h.node(l).point_indices.clone()).collect();
        covered.sort_unstable();
        assert_eq!(covered, (0..r.points().len()).collect::<Vec<_>>(), "{}", r.name);
    }
}

#[test]
fn retrieval_excludes_the_query_and_sorts_by_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_dataset(tmp.path(), Category::Chair, 6, 5, &config(0.0)).unwrap();
    let corpus: Vec<RetrievalItem> = ds
        .load_split(None)
        .unwrap()
        .into_iter()
        .map(|r| {
            let hierarchy = rule_based(r.points(), &r.segments(), ds.taxonomy()).unwrap();
            RetrievalItem { name: r.name.clone(), points: r.points().to_vec(), hierarchy }
        })
        .collect();
    let hits = rank_corpus(&corpus[0], &corpus, RetrievalMode::Structure, Some(0)).unwrap();
    assert_eq!(hits.len(), corpus.len() - 1);
    assert!(hits.iter().all(|h| h.index != 0));
    assert!(hits.windows(2).all(|w| w[0].structure_distance <= w[1].structure_distance));
}
