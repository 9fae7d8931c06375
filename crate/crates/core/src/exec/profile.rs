//! Wall-clock profiling of kernel and exchange work.
//!
//! Raw per-operator timings are plain durations. Category times are
//! concurrency-normalized: overlapping intervals share each instant equally,
//! so the category sum never exceeds elapsed wall time regardless of the
//! worker count.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    Join,
    GroupBy,
    Filter,
    Aggregation,
    OrderBy,
    Exchange,
    Other,
}

impl Category {
    pub fn name(&self) -> &'static str {
        match self {
            Category::Join => "join",
            Category::GroupBy => "group-by",
            Category::Filter => "filter",
            Category::Aggregation => "aggregation",
            Category::OrderBy => "order-by",
            Category::Exchange => "exchange",
            Category::Other => "other",
        }
    }

    pub fn all() -> [Category; 7] {
        [
            Category::Join,
            Category::GroupBy,
            Category::Filter,
            Category::Aggregation,
            Category::OrderBy,
            Category::Exchange,
            Category::Other,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfEvent {
    pub category: Category,
    pub node_id: u32,
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug)]
pub struct Profiler {
    origin: Instant,
    events: Mutex<Vec<ProfEvent>>,
}

impl Default for Profiler {
    fn default() -> Self {
        Profiler::new()
    }
}

impl Profiler {
    pub fn new() -> Profiler {
        Profiler {
            origin: Instant::now(),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    /// Time a kernel invocation, attributing it to one category and plan node.
    pub fn record<T>(&self, category: Category, node_id: u32, f: impl FnOnce() -> T) -> T {
        let start_ns = self.now_ns();
        let out = f();
        let end_ns = self.now_ns();
        self.events.lock().unwrap().push(ProfEvent {
            category,
            node_id,
            start_ns,
            end_ns,
        });
        out
    }

    pub fn push_event(&self, e: ProfEvent) {
        self.events.lock().unwrap().push(e);
    }

    pub fn events(&self) -> Vec<ProfEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn report(&self, wall_ns: u64) -> ProfileReport {
        let events = self.events();
        let mut per_operator: BTreeMap<u32, u64> = BTreeMap::new();
        for e in &events {
            *per_operator.entry(e.node_id).or_default() += e.end_ns - e.start_ns;
        }
        let categories = normalize(&events);
        let busy_ns = categories.values().sum();
        ProfileReport {
            wall_ns,
            categories,
            per_operator,
            busy_ns,
        }
    }

    /// (compute, exchange) with exchange counted only where it does not
    /// overlap compute; both concurrency-normalized so their sum stays
    /// within elapsed time.
    pub fn compute_exchange_ns(&self) -> (u64, u64) {
        let events = self.events();
        let compute: Vec<(u64, u64)> = events
            .iter()
            .filter(|e| e.category != Category::Exchange)
            .map(|e| (e.start_ns, e.end_ns))
            .collect();
        let exchange: Vec<(u64, u64)> = events
            .iter()
            .filter(|e| e.category == Category::Exchange)
            .map(|e| (e.start_ns, e.end_ns))
            .collect();
        let compute_union = union_measure(&compute);
        let both: Vec<(u64, u64)> = compute.iter().chain(exchange.iter()).copied().collect();
        let total_union = union_measure(&both);
        (compute_union, total_union - compute_union)
    }
}

fn union_measure(intervals: &[(u64, u64)]) -> u64 {
    let mut iv: Vec<(u64, u64)> = intervals.iter().copied().filter(|(a, b)| b > a).collect();
    iv.sort_unstable();
    let mut total = 0u64;
    let mut cur: Option<(u64, u64)> = None;
    for (a, b) in iv {
        match cur {
            None => cur = Some((a, b)),
            Some((cs, ce)) => {
                if a <= ce {
                    cur = Some((cs, ce.max(b)));
                } else {
                    total += ce - cs;
                    cur = Some((a, b));
                }
            }
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}

/// Sweep-line fractional attribution: at every instant each active event
/// accrues dt / (number of active events) to its category.
fn normalize(events: &[ProfEvent]) -> BTreeMap<Category, u64> {
    let mut out: BTreeMap<Category, u64> = BTreeMap::new();
    let mut acc: BTreeMap<Category, f64> = BTreeMap::new();
    let mut bounds: Vec<u64> = events
        .iter()
        .flat_map(|e| [e.start_ns, e.end_ns])
        .collect();
    bounds.sort_unstable();
    bounds.dedup();
    for w in bounds.windows(2) {
        let (t1, t2) = (w[0], w[1]);
        let active: Vec<Category> = events
            .iter()
            .filter(|e| e.start_ns <= t1 && e.end_ns >= t2 && e.end_ns > e.start_ns)
            .map(|e| e.category)
            .collect();
        if active.is_empty() {
            continue;
        }
        let share = (t2 - t1) as f64 / active.len() as f64;
        for c in active {
            *acc.entry(c).or_default() += share;
        }
    }
    for (c, v) in acc {
        out.insert(c, v.round() as u64);
    }
    out
}

#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub wall_ns: u64,
    /// Concurrency-normalized per-category nanoseconds.
    pub categories: BTreeMap<Category, u64>,
    /// Raw per-plan-node nanoseconds (may exceed wall under parallelism).
    pub per_operator: BTreeMap<u32, u64>,
    pub busy_ns: u64,
}

impl ProfileReport {
    pub fn category_ns(&self, c: Category) -> u64 {
        self.categories.get(&c).copied().unwrap_or(0)
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "total wall time: {:.3} ms\n",
            self.wall_ns as f64 / 1e6
        ));
        for c in Category::all() {
            s.push_str(&format!(
                "  {:<12} {:>12.3} ms\n",
                c.name(),
                self.category_ns(c) as f64 / 1e6
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(category: Category, start_ns: u64, end_ns: u64) -> ProfEvent {
        ProfEvent {
            category,
            node_id: 0,
            start_ns,
            end_ns,
        }
    }

    #[test]
    fn overlapping_events_share_time() {
        let events = vec![
            ev(Category::Join, 0, 100),
            ev(Category::Filter, 0, 100),
        ];
        let n = normalize(&events);
        assert_eq!(n[&Category::Join], 50);
        assert_eq!(n[&Category::Filter], 50);
    }

    #[test]
    fn disjoint_events_keep_full_time() {
        let events = vec![ev(Category::Join, 0, 40), ev(Category::Filter, 60, 100)];
        let n = normalize(&events);
        assert_eq!(n[&Category::Join], 40);
        assert_eq!(n[&Category::Filter], 40);
    }

    #[test]
    fn category_sum_never_exceeds_busy_union() {
        let events = vec![
            ev(Category::Join, 0, 100),
            ev(Category::Join, 50, 150),
            ev(Category::GroupBy, 75, 200),
            ev(Category::Other, 300, 350),
        ];
        let n = normalize(&events);
        let total: u64 = n.values().sum();
        let union = union_measure(&[(0, 200), (300, 350)]);
        assert!(total <= union + 2, "{total} vs {union}");
    }

    #[test]
    fn exchange_overlapped_by_compute_is_discounted() {
        let p = Profiler::new();
        p.push_event(ev(Category::Join, 0, 100));
        p.push_event(ev(Category::Exchange, 50, 150));
        let (c, e) = p.compute_exchange_ns();
        assert_eq!(c, 100);
        assert_eq!(e, 50);
    }
}
