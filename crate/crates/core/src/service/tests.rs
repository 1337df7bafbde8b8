use super::*;
use crate::annotation::{aggregate_labels, build_gold_set, make_batches, read_labels_csv, Batch, Tier};

fn def(n: usize, base: usize, dups: usize) -> ProjectDefinition {
    let ids: Vec<String> = (0..n).map(|i| format!("t{i:04}")).collect();
    ProjectDefinition {
        id: "p1".into(),
        round: 1,
        batches: make_batches(&ids, base, dups, 17).unwrap(),
        texts: ids.iter().map(|i| (i.clone(), format!("text of {i}"))).collect(),
    }
}

fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new("2014-01-01T00:00:00Z".parse().unwrap()))
}

fn service(d: ProjectDefinition, c: Arc<ManualClock>) -> Service {
    let mut s = Service::new(ServiceConfig::default(), c);
    s.add_project(d).unwrap();
    s
}

fn batch<'a>(d: &'a ProjectDefinition, id: &str) -> &'a Batch {
    d.batches.iter().find(|b| b.id == id).unwrap()
}

/// Answers every position with `f(tweet_id)`.
fn answers_by(b: &Batch, f: impl Fn(&str) -> Answer) -> BTreeMap<usize, Answer> {
    b.items.iter().enumerate().map(|(p, t)| (p, f(t))).collect()
}

#[test]
fn first_batch_and_conflict() {
    let d = def(80, 40, 5);
    let s = service(d.clone(), clock());
    let v = s.next_batch("p1", "w1").unwrap().unwrap();
    assert_eq!(v.batch_id, "batch-0001");
    assert_eq!(v.items.len(), 45);
    assert_eq!(v.question, crate::annotation::QUESTION);
    let json = serde_json::to_string(&v).unwrap();
    assert!(!json.contains("tweet_id"), "tweet ids must not leak");

    match s.next_batch("p1", "w1") {
        Err(ServiceError::AlreadyAssigned(a)) => assert_eq!(a.batch_id, v.batch_id),
        other => panic!("{other:?}"),
    }
    let v2 = s.next_batch("p1", "w2").unwrap().unwrap();
    assert_ne!(v2.batch_id, v.batch_id);
    assert!(s.next_batch("p1", "w3").unwrap().is_none());
    assert!(matches!(s.next_batch("nope", "w1"), Err(ServiceError::UnknownProject(_))));
}

#[test]
fn partial_submission_stores_nothing() {
    let d = def(40, 40, 5);
    let s = service(d.clone(), clock());
    let v = s.next_batch("p1", "w1").unwrap().unwrap();
    let mut ans = answers_by(batch(&d, &v.batch_id), |_| Answer::Y);
    ans.remove(&3);
    match s.submit_labels("p1", "w1", &v.batch_id, &ans) {
        Err(ServiceError::Incomplete { answered: 44, expected: 45 }) => {}
        other => panic!("{other:?}"),
    }
    assert!(s.counted_labels("p1").unwrap().is_empty());
    assert!(s.state("p1").unwrap().submissions.is_empty());
    // assignment is still held, so a full retry works
    let ans = answers_by(batch(&d, &v.batch_id), |_| Answer::Y);
    let r = s.submit_labels("p1", "w1", &v.batch_id, &ans).unwrap();
    assert_eq!((r.consistency, r.qualified), (1.0, true));
    assert_eq!(s.counted_labels("p1").unwrap().len(), 45);
    // identical resubmission is an idempotent receipt
    assert_eq!(s.submit_labels("p1", "w1", &v.batch_id, &ans).unwrap(), r);
    let mut other = ans.clone();
    other.insert(0, Answer::N);
    assert!(matches!(
        s.submit_labels("p1", "w1", &v.batch_id, &other),
        Err(ServiceError::ResubmissionConflict(_))
    ));
}

#[test]
fn inconsistent_worker_is_disqualified_and_batch_requeued() {
    let d = def(40, 40, 5);
    let s = service(d.clone(), clock());
    let v = s.next_batch("p1", "w1").unwrap().unwrap();
    let b = batch(&d, &v.batch_id);
    let mut ans = answers_by(b, |_| Answer::Y);
    // break two of five duplicate pairs: consistency 0.6
    for &(_, r) in &b.dup_pairs[..2] {
        ans.insert(r, Answer::N);
    }
    let r = s.submit_labels("p1", "w1", &v.batch_id, &ans).unwrap();
    assert!((r.consistency - 0.6).abs() < 1e-12);
    assert!(!r.qualified);
    assert_eq!(r.batch_status, BatchStatus::Open);
    assert!(s.counted_labels("p1").unwrap().is_empty());
    // never served the same batch again
    assert!(s.next_batch("p1", "w1").unwrap().is_none());
    assert_eq!(s.next_batch("p1", "w2").unwrap().unwrap().batch_id, v.batch_id);
    assert_eq!(s.status("p1").unwrap().disqualified_submissions, 1);
}

#[test]
fn expired_assignment_is_rejected_and_requeued() {
    let d = def(40, 40, 5);
    let c = clock();
    let s = service(d.clone(), c.clone());
    let v = s.next_batch("p1", "w1").unwrap().unwrap();
    c.advance(chrono::Duration::minutes(31));
    let ans = answers_by(batch(&d, &v.batch_id), |_| Answer::Y);
    assert!(matches!(
        s.submit_labels("p1", "w1", &v.batch_id, &ans),
        Err(ServiceError::Expired { .. })
    ));
    assert_eq!(s.status("p1").unwrap().batches_open, 1);
    assert_eq!(s.next_batch("p1", "w2").unwrap().unwrap().batch_id, v.batch_id);
}

fn run_five(s: &Service, d: &ProjectDefinition, vote: impl Fn(usize, &str) -> Answer) {
    for w in 0..5 {
        let worker = format!("w{w}");
        while let Some(v) = s.next_batch("p1", &worker).unwrap() {
            let ans = answers_by(batch(d, &v.batch_id), |t| vote(w, t));
            s.submit_labels("p1", &worker, &v.batch_id, &ans).unwrap();
        }
    }
}

#[test]
fn status_statistics() {
    let d = def(20, 10, 2);
    let s = service(d.clone(), clock());
    let st = s.status("p1").unwrap();
    assert_eq!((st.progress, st.statistics_available), (0.0, false));
    assert!(st.agreement.is_none());

    run_five(&s, &d, |_, t| Answer::from_bool(t < "t0010"));
    let st = s.status("p1").unwrap();
    assert_eq!(st.batches_complete, 2);
    assert_eq!(st.progress, 1.0);
    let a = st.agreement.unwrap();
    assert_eq!((a.fleiss_kappa, a.krippendorff_alpha), (1.0, 1.0));
    assert_eq!(st.tier_histogram[&Tier::UnanimousYes], 10);
    assert_eq!(st.tier_histogram[&Tier::UnanimousNo], 10);
}

fn split_vote(w: usize, t: &str) -> Answer {
    let i: usize = t[1..].parse().unwrap();
    // tweet i gets (i % 6) yes votes from workers 0..5
    Answer::from_bool(w < i % 6)
}

#[test]
fn histogram_matches_offline_aggregation_of_export() {
    let d = def(30, 10, 0);
    let s = service(d.clone(), clock());
    run_five(&s, &d, split_vote);
    let csv = s.export_labels_csv("p1").unwrap();
    let offline = aggregate_labels(&read_labels_csv(csv.as_slice()).unwrap());
    assert_eq!(s.status("p1").unwrap().tier_histogram, offline.histogram());
    assert!(offline.deficiencies.is_empty());
}

#[test]
fn adjudication_flow() {
    let d = def(30, 10, 0);
    let s = service(d.clone(), clock());
    run_five(&s, &d, split_vote);
    let queue = s.adjudication_queue("p1", false).unwrap();
    // yes counts 2,3,4,1 are majority tiers: i % 6 in {1,2,3,4}
    assert_eq!(queue.len(), 20);
    let three_no = queue.iter().find(|q| q.tier == Tier::ThreeNo).unwrap();
    assert_eq!(three_no.group, "not-job-3");

    let out = s.adjudicate("p1", &three_no.tweet_id, true, "expert-a").unwrap();
    assert!(out.job_related && out.changed);
    let again = s.adjudicate("p1", &three_no.tweet_id, true, "expert-b").unwrap();
    assert!(!again.changed);
    assert_eq!(again.expert_id, "expert-a");
    let flip = s.adjudicate("p1", &three_no.tweet_id, false, "expert-b").unwrap();
    assert!(flip.changed && !flip.job_related);
    assert_eq!(flip.history.len(), 2);

    assert!(matches!(
        s.adjudicate("p1", "t0000", true, "x"),
        Err(ServiceError::NotInQueue(_))
    ));
    assert_eq!(s.adjudication_queue("p1", false).unwrap().len(), 19);

    let aggregates = aggregate_labels(&s.counted_labels("p1").unwrap()).labels;
    let adj = s.adjudications("p1").unwrap();
    assert!(matches!(build_gold_set(&aggregates, &adj), Err(Error::MissingAdjudication(m)) if m.len() == 19));
}

#[test]
fn persistence_replays_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let d = def(30, 10, 2);
    let c = clock();
    let config = ServiceConfig {
        snapshot_every: 7,
        ..ServiceConfig::default()
    };
    let live = {
        let mut s = Service::new(config.clone(), c.clone());
        s.open_project(d.clone(), dir.path()).unwrap();
        run_five(&s, &d, split_vote);
        let q = s.adjudication_queue("p1", false).unwrap();
        s.adjudicate("p1", &q[0].tweet_id, true, "e1").unwrap();
        s.adjudicate("p1", &q[0].tweet_id, false, "e2").unwrap();
        s.state("p1").unwrap()
    };
    assert!(dir.path().join(SNAPSHOT_FILE).exists());

    let events = read_events(dir.path().join(EVENTS_FILE)).unwrap();
    assert_eq!(replay(&d, &events).unwrap(), live);

    let reopened = Service::open_data_dir_at(dir.path(), &d, config, c);
    assert_eq!(reopened.state("p1").unwrap(), live);
}

impl Service {
    fn open_data_dir_at(dir: &Path, d: &ProjectDefinition, config: ServiceConfig, c: Arc<ManualClock>) -> Service {
        let mut s = Service::new(config, c);
        s.open_project(d.clone(), dir).unwrap();
        s
    }
}
