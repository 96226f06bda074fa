//! PSI with weighted cardinality between one client and two non-colluding servers.
//!
//! The client shares one point function per `(token, weight)` pair. Each server
//! sums its key shares over every server token, adds its half of a shared
//! blinding element, and answers with a single group element. The client adds
//! the two answers and learns `sum { w_i : y_i in X }` and nothing else.
//!
//! [`EpochWindow`] and [`IncrementalSession`] implement the sliding-window
//! variant where only new client tokens are keyed each epoch and servers cache
//! per-epoch partial sums.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::domain::DomainPoint;
use crate::dpf::{self, DpfKey, DpfParams, Party, SECURITY_BITS};
use crate::error::{Error, Result};
use crate::group::{Group, GroupElement};
use crate::prg::PrgCounter;

/// Below this many `(key, token)` pairs evaluation stays on the calling thread.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct QueryId(pub [u8; 16]);

impl QueryId {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        QueryId(rng.gen())
    }
}

impl fmt::Debug for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QueryId(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedToken {
    pub token: DomainPoint,
    pub weight: GroupElement,
}

impl WeightedToken {
    pub fn new(token: DomainPoint, weight: GroupElement) -> Self {
        WeightedToken { token, weight }
    }
}

/// One server's half of a client query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryShare {
    pub query_id: QueryId,
    pub epoch: u64,
    pub party: Party,
    pub keys: Vec<DpfKey>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerShare {
    pub query_id: QueryId,
    pub value: GroupElement,
}

/// Keys every input pair. Duplicate tokens are allowed; their weights add up.
pub fn client_gen_query(
    inputs: &[WeightedToken],
    params: &DpfParams,
    seed: [u8; 32],
) -> Result<(QueryShare, QueryShare)> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("query needs at least one token".into()));
    }
    let mut rng = ChaCha20Rng::from_seed(seed);
    let query_id = QueryId::random(&mut rng);
    let mut keys0 = Vec::with_capacity(inputs.len());
    let mut keys1 = Vec::with_capacity(inputs.len());
    for input in inputs {
        let (k0, k1) = dpf::gen(params, SECURITY_BITS, &input.token, &input.weight, rng.gen())?;
        keys0.push(k0);
        keys1.push(k1);
    }
    let share = |party, keys| QueryShare {
        query_id,
        epoch: 0,
        party,
        keys,
    };
    Ok((share(Party::Zero, keys0), share(Party::One, keys1)))
}

/// Checks that every key matches `params` and every server token has the right length.
fn validate(keys: &[DpfKey], params: &DpfParams, xs: &[DomainPoint]) -> Result<()> {
    for k in keys {
        if k.domain_bits() != params.domain_bits {
            return Err(Error::DomainMismatch {
                expected: params.domain_bits,
                got: k.domain_bits(),
            });
        }
        if k.group() != &params.group {
            return Err(Error::GroupMismatch(format!(
                "key over {} but query uses {}",
                k.group(),
                params.group
            )));
        }
    }
    if let Some(x) = xs.iter().find(|x| x.bits() != params.domain_bits) {
        return Err(Error::DomainMismatch {
            expected: params.domain_bits,
            got: x.bits(),
        });
    }
    Ok(())
}

/// `sum_{key, x} Eval(key, x)` without blinding. Inputs must already be validated.
pub(crate) fn eval_sum(keys: &[DpfKey], xs: &[DomainPoint], group: &Group) -> GroupElement {
    if keys.len() * xs.len() < PARALLEL_THRESHOLD {
        let mut acc = group.zero();
        for k in keys {
            group.add_assign(&mut acc, &k.eval_sum(xs).expect("validated"));
        }
        return acc;
    }
    let (acc, work) = keys
        .par_iter()
        .map(|k| {
            let start = PrgCounter::current();
            let acc = k.eval_sum(xs).expect("validated");
            let work = start.since();
            PrgCounter::restore(start);
            (acc, work)
        })
        .reduce(
            || (group.zero(), PrgCounter::default()),
            |(a, wa), (b, wb)| (group.add(&a, &b), wa + wb),
        );
    PrgCounter::credit(work);
    acc
}

/// One server's answer: the sum of its key shares over `xs`, plus `blind`.
pub fn server_eval(share: &QueryShare, xs: &[DomainPoint], blind: &GroupElement) -> Result<AnswerShare> {
    let Some(first) = share.keys.first() else {
        return Ok(AnswerShare {
            query_id: share.query_id,
            value: blind.clone(),
        });
    };
    let params = first.params();
    params.group.check(blind)?;
    validate(&share.keys, &params, xs)?;
    let mut value = eval_sum(&share.keys, xs, &params.group);
    params.group.add_assign(&mut value, blind);
    Ok(AnswerShare {
        query_id: share.query_id,
        value,
    })
}

/// The pair `(r, -r)` both servers derive from their common secret for one query.
pub fn derive_blinds(
    shared_seed: &[u8; 32],
    query_id: QueryId,
    group: &Group,
) -> (GroupElement, GroupElement) {
    let mut h = Sha256::new();
    h.update(b"psica blind v1");
    h.update(shared_seed);
    h.update(query_id.0);
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    let r = group.random(&mut rng);
    let neg = group.neg(&r);
    (r, neg)
}

/// Blind for one party: `r` for server 0, `-r` for server 1.
pub fn party_blind(shared_seed: &[u8; 32], query_id: QueryId, group: &Group, party: Party) -> GroupElement {
    let (r, neg) = derive_blinds(shared_seed, query_id, group);
    match party {
        Party::Zero => r,
        Party::One => neg,
    }
}

pub fn client_reconstruct(a0: &AnswerShare, a1: &AnswerShare, group: &Group) -> Result<GroupElement> {
    if a0.query_id != a1.query_id {
        return Err(Error::Protocol(format!(
            "answers belong to different queries: {:?} vs {:?}",
            a0.query_id, a1.query_id
        )));
    }
    group.check(&a0.value)?;
    group.check(&a1.value)?;
    Ok(group.add(&a0.value, &a1.value))
}

/// Client side of one protocol run: one outgoing share per server, then exactly
/// one answer from each. Consumed on completion, so a query cannot be finished twice.
#[derive(Debug)]
pub struct PendingQuery {
    query_id: QueryId,
    group: Group,
}

impl PendingQuery {
    pub fn start(
        inputs: &[WeightedToken],
        params: &DpfParams,
        seed: [u8; 32],
    ) -> Result<(PendingQuery, [QueryShare; 2])> {
        let (s0, s1) = client_gen_query(inputs, params, seed)?;
        let pending = PendingQuery {
            query_id: s0.query_id,
            group: params.group.clone(),
        };
        Ok((pending, [s0, s1]))
    }

    pub fn query_id(&self) -> QueryId {
        self.query_id
    }

    pub fn finish(self, a0: &AnswerShare, a1: &AnswerShare) -> Result<GroupElement> {
        if a0.query_id != self.query_id {
            return Err(Error::Protocol("answer does not match the outstanding query".into()));
        }
        client_reconstruct(a0, a1, &self.group)
    }
}

struct EpochSlot {
    epoch: u64,
    keys: Vec<DpfKey>,
    xs: Vec<DomainPoint>,
}

/// One server's view of the sliding window: the client key shares and server
/// tokens of the last `T` epochs, plus cached partial sums per
/// `(key epoch, token epoch)` pair.
pub struct EpochWindow {
    window: u64,
    party: Party,
    params: DpfParams,
    slots: VecDeque<EpochSlot>,
    pairs: BTreeMap<(u64, u64), GroupElement>,
    current: Option<u64>,
}

impl EpochWindow {
    pub fn new(window: usize, params: DpfParams, party: Party) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window must span at least one epoch".into()));
        }
        Ok(EpochWindow {
            window: window as u64,
            party,
            params,
            slots: VecDeque::new(),
            pairs: BTreeMap::new(),
            current: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window as usize
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn current_epoch(&self) -> Option<u64> {
        self.current
    }

    pub fn epochs(&self) -> impl Iterator<Item = u64> + '_ {
        self.slots.iter().map(|s| s.epoch)
    }

    pub fn stored_keys(&self) -> usize {
        self.slots.iter().map(|s| s.keys.len()).sum()
    }

    pub fn stored_tokens(&self) -> usize {
        self.slots.iter().map(|s| s.xs.len()).sum()
    }

    /// Drops every epoch that has left the window ending at `epoch`.
    fn expire(&mut self, epoch: u64) {
        let oldest_live = (epoch + 1).saturating_sub(self.window);
        while self.slots.front().is_some_and(|s| s.epoch < oldest_live) {
            self.slots.pop_front();
        }
        self.pairs
            .retain(|&(ke, xe), _| ke >= oldest_live && xe >= oldest_live);
    }

    /// Moves to `epoch`, storing the new key shares and server tokens, and
    /// returns the new partial sum: new keys against all stored tokens plus
    /// stored keys against the new tokens.
    pub fn advance(&mut self, epoch: u64, keys: Vec<DpfKey>, xs: Vec<DomainPoint>) -> Result<GroupElement> {
        if let Some(cur) = self.current {
            if epoch <= cur {
                return Err(Error::EpochRegression {
                    current: cur,
                    requested: epoch,
                });
            }
        }
        if let Some(k) = keys.iter().find(|k| k.party() != self.party) {
            return Err(Error::Protocol(format!(
                "key for party {:?} sent to party {:?}",
                k.party(),
                self.party
            )));
        }
        validate(&keys, &self.params, &xs)?;
        self.expire(epoch);
        self.current = Some(epoch);
        self.slots.push_back(EpochSlot { epoch, keys, xs });

        let group = &self.params.group;
        let new = self.slots.back().expect("just pushed");
        let mut fresh = Vec::new();
        for slot in &self.slots {
            fresh.push(((epoch, slot.epoch), eval_sum(&new.keys, &slot.xs, group)));
            if slot.epoch != epoch {
                fresh.push(((slot.epoch, epoch), eval_sum(&slot.keys, &new.xs, group)));
            }
        }
        let contribution = group.sum(fresh.iter().map(|(_, v)| v));
        self.pairs.extend(fresh);
        Ok(contribution)
    }

    /// Unblinded sum over every live `(key, token)` pair in the window.
    pub fn total(&self) -> GroupElement {
        self.params.group.sum(self.pairs.values())
    }
}

/// Per-epoch output of [`IncrementalSession::window_advance`].
#[derive(Clone, Debug)]
pub struct WindowAnswer {
    pub epoch: u64,
    /// Blinded partial sums added this epoch.
    pub contributions: [AnswerShare; 2],
    /// Blinded totals over the whole window.
    pub window: [AnswerShare; 2],
}

/// Client plus both servers running the incremental protocol in-process.
pub struct IncrementalSession {
    params: DpfParams,
    windows: [EpochWindow; 2],
    shared_seed: [u8; 32],
    session_id: [u8; 16],
    rng: ChaCha20Rng,
}

impl IncrementalSession {
    pub fn new(window: usize, params: DpfParams, shared_seed: [u8; 32], seed: [u8; 32]) -> Result<Self> {
        let mut rng = ChaCha20Rng::from_seed(seed);
        Ok(IncrementalSession {
            windows: [
                EpochWindow::new(window, params.clone(), Party::Zero)?,
                EpochWindow::new(window, params.clone(), Party::One)?,
            ],
            params,
            shared_seed,
            session_id: rng.gen(),
            rng,
        })
    }

    pub fn server_window(&self, party: Party) -> &EpochWindow {
        &self.windows[party.index()]
    }

    fn answer_id(&self, epoch: u64, tag: u8) -> QueryId {
        let mut h = Sha256::new();
        h.update(self.session_id);
        h.update(epoch.to_le_bytes());
        h.update([tag]);
        QueryId(h.finalize()[..16].try_into().unwrap())
    }

    /// Keys only the `n'` new client tokens; both servers fold in the `N'` new
    /// server tokens and drop expired epochs.
    pub fn window_advance(
        &mut self,
        epoch: u64,
        new_client_tokens: &[WeightedToken],
        new_server_tokens: &[DomainPoint],
    ) -> Result<WindowAnswer> {
        let (keys0, keys1) = if new_client_tokens.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let (s0, s1) = client_gen_query(new_client_tokens, &self.params, self.rng.gen())?;
            (s0.keys, s1.keys)
        };
        let c0 = self.windows[0].advance(epoch, keys0, new_server_tokens.to_vec())?;
        let c1 = self.windows[1].advance(epoch, keys1, new_server_tokens.to_vec())?;
        let group = &self.params.group;
        let blinded = |id: QueryId, v0: GroupElement, v1: GroupElement| {
            let (r, neg) = derive_blinds(&self.shared_seed, id, group);
            [
                AnswerShare {
                    query_id: id,
                    value: group.add(&v0, &r),
                },
                AnswerShare {
                    query_id: id,
                    value: group.add(&v1, &neg),
                },
            ]
        };
        let contributions = blinded(self.answer_id(epoch, 0), c0, c1);
        let window = blinded(
            self.answer_id(epoch, 1),
            self.windows[0].total(),
            self.windows[1].total(),
        );
        Ok(WindowAnswer {
            epoch,
            contributions,
            window,
        })
    }

    pub fn reconstruct(&self, answers: &[AnswerShare; 2]) -> Result<GroupElement> {
        client_reconstruct(&answers[0], &answers[1], &self.params.group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(bits: u8) -> DpfParams {
        DpfParams::new(bits, Group::default()).unwrap()
    }

    fn wt(v: u128, bits: u8, w: u64) -> WeightedToken {
        WeightedToken::new(
            DomainPoint::new(v, bits).unwrap(),
            Group::default().element(&[w]).unwrap(),
        )
    }

    fn run(inputs: &[WeightedToken], xs: &[DomainPoint], p: &DpfParams, shared: [u8; 32]) -> (GroupElement, AnswerShare) {
        let (s0, s1) = client_gen_query(inputs, p, [4; 32]).unwrap();
        let (r, neg) = derive_blinds(&shared, s0.query_id, &p.group);
        let a0 = server_eval(&s0, xs, &r).unwrap();
        let a1 = server_eval(&s1, xs, &neg).unwrap();
        (client_reconstruct(&a0, &a1, &p.group).unwrap(), a0)
    }

    #[test]
    fn single_token_hit() {
        let p = params(8);
        let x = [DomainPoint::new(5, 8).unwrap()];
        let (w, _) = run(&[wt(5, 8, 1)], &x, &p, [0; 32]);
        assert_eq!(w.scalar(), 1);
    }

    #[test]
    fn zero_weights_reconstruct_to_identity() {
        let p = params(8);
        let xs: Vec<_> = (0..50).map(|v| DomainPoint::new(v, 8).unwrap()).collect();
        let inputs = [wt(1, 8, 0), wt(2, 8, 0), wt(99, 8, 0)];
        assert!(run(&inputs, &xs, &p, [1; 32]).0.is_zero());
    }

    #[test]
    fn duplicate_tokens_accumulate() {
        let p = params(8);
        let xs = [DomainPoint::new(7, 8).unwrap()];
        let (w, _) = run(&[wt(7, 8, 2), wt(7, 8, 3)], &xs, &p, [0; 32]);
        assert_eq!(w.scalar(), 5);
    }

    #[test]
    fn empty_server_set_returns_blind() {
        let p = params(8);
        let (s0, _) = client_gen_query(&[wt(1, 8, 1)], &p, [0; 32]).unwrap();
        let blind = p.group.element(&[1234]).unwrap();
        assert_eq!(server_eval(&s0, &[], &blind).unwrap().value, blind);
    }

    #[test]
    fn blinding_hides_share_but_not_sum() {
        let p = params(16);
        let xs: Vec<_> = (0..20).map(|v| DomainPoint::new(v * 3, 16).unwrap()).collect();
        let inputs = [wt(3, 16, 10), wt(4, 16, 20), wt(6, 16, 30)];
        let (w1, a1) = run(&inputs, &xs, &p, [1; 32]);
        let (w2, a2) = run(&inputs, &xs, &p, [2; 32]);
        assert_eq!(w1, w2);
        assert_eq!(w1.scalar(), 40);
        assert_ne!(a1.value, a2.value);
    }

    #[test]
    fn errors() {
        let p = params(8);
        assert!(client_gen_query(&[], &p, [0; 32]).is_err());
        let other = WeightedToken::new(
            DomainPoint::new(1, 8).unwrap(),
            Group::new(&[7, 7]).unwrap().element(&[1, 1]).unwrap(),
        );
        assert!(client_gen_query(&[other], &p, [0; 32]).is_err());
        let (s0, _) = client_gen_query(&[wt(1, 8, 1)], &p, [0; 32]).unwrap();
        let bad = [DomainPoint::new(1, 8).unwrap(), DomainPoint::new(1, 9).unwrap()];
        assert!(matches!(
            server_eval(&s0, &bad, &p.group.zero()),
            Err(Error::DomainMismatch { .. })
        ));
        let a = AnswerShare { query_id: QueryId([1; 16]), value: p.group.zero() };
        let b = AnswerShare { query_id: QueryId([2; 16]), value: p.group.zero() };
        assert!(matches!(client_reconstruct(&a, &b, &p.group), Err(Error::Protocol(_))));
    }

    #[test]
    fn reconstruct_is_group_addition() {
        let g = Group::default();
        let id = QueryId([0; 16]);
        let a = AnswerShare { query_id: id, value: g.element(&[3]).unwrap() };
        let b = AnswerShare { query_id: id, value: g.element(&[5]).unwrap() };
        assert_eq!(client_reconstruct(&a, &b, &g).unwrap().scalar(), 8);
        let x = g.element(&[40000]).unwrap();
        let a = AnswerShare { query_id: id, value: x.clone() };
        let b = AnswerShare { query_id: id, value: g.neg(&x) };
        assert!(client_reconstruct(&a, &b, &g).unwrap().is_zero());
    }

    #[test]
    fn blinds_cancel_and_are_deterministic() {
        let g = Group::default();
        for i in 0..100u8 {
            let (r, neg) = derive_blinds(&[i; 32], QueryId([i; 16]), &g);
            assert!(g.add(&r, &neg).is_zero());
            assert_eq!(derive_blinds(&[i; 32], QueryId([i; 16]), &g).0, r);
        }
    }

    #[test]
    fn pending_query_checks_id() {
        let p = params(8);
        let (pending, [s0, s1]) = PendingQuery::start(&[wt(9, 8, 4)], &p, [0; 32]).unwrap();
        let xs = [DomainPoint::new(9, 8).unwrap()];
        let a0 = server_eval(&s0, &xs, &p.group.zero()).unwrap();
        let a1 = server_eval(&s1, &xs, &p.group.zero()).unwrap();
        let mut wrong = a0.clone();
        wrong.query_id = QueryId([0xee; 16]);
        let (pending2, _) = PendingQuery::start(&[wt(9, 8, 4)], &p, [0; 32]).unwrap();
        assert!(pending2.finish(&wrong, &a1).is_err());
        assert_eq!(pending.finish(&a0, &a1).unwrap().scalar(), 4);
    }

    #[test]
    fn window_rejects_regression_and_foreign_keys() {
        let p = params(8);
        let mut w = EpochWindow::new(3, p.clone(), Party::Zero).unwrap();
        w.advance(5, vec![], vec![]).unwrap();
        assert!(matches!(w.advance(5, vec![], vec![]), Err(Error::EpochRegression { .. })));
        assert!(matches!(w.advance(4, vec![], vec![]), Err(Error::EpochRegression { .. })));
        let (_, s1) = client_gen_query(&[wt(1, 8, 1)], &p, [0; 32]).unwrap();
        assert!(w.advance(6, s1.keys, vec![]).is_err());
        assert!(EpochWindow::new(0, p, Party::Zero).is_err());
    }

    #[test]
    fn window_expires_old_epochs() {
        let p = params(8);
        let mut w = EpochWindow::new(3, p, Party::Zero).unwrap();
        for e in 0..5 {
            w.advance(e, vec![], vec![DomainPoint::new(e as u128, 8).unwrap()]).unwrap();
        }
        assert_eq!(w.epochs().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(w.stored_tokens(), 3);
        // a gap longer than the window empties it
        w.advance(10, vec![], vec![]).unwrap();
        assert_eq!(w.epochs().collect::<Vec<_>>(), vec![10]);
    }

    #[test]
    fn epoch_without_server_tokens_only_matches_new_keys() {
        let p = params(8);
        let mut s = IncrementalSession::new(4, p, [7; 32], [8; 32]).unwrap();
        let x = DomainPoint::new(42, 8).unwrap();
        let a = s.window_advance(0, &[], &[x]).unwrap();
        assert!(s.reconstruct(&a.window).unwrap().is_zero());
        let a = s.window_advance(1, &[wt(42, 8, 6)], &[]).unwrap();
        assert_eq!(s.reconstruct(&a.contributions).unwrap().scalar(), 6);
        assert_eq!(s.reconstruct(&a.window).unwrap().scalar(), 6);
    }

    #[test]
    fn client_cost_per_epoch_is_only_new_tokens() {
        let bits = 32u8;
        let p = params(bits);
        let mut s = IncrementalSession::new(14, p, [7; 32], [8; 32]).unwrap();
        for epoch in 0..14u64 {
            let new: Vec<_> = (0..3).map(|i| wt((epoch * 10 + i) as u128, bits, 1)).collect();
            let keys0 = s.server_window(Party::Zero).stored_keys();
            let before = PrgCounter::current();
            let (s0, _) = client_gen_query(&new, &s.params, [epoch as u8; 32]).unwrap();
            let gen_cost = before.since().expansions;
            assert_eq!(s0.keys.len(), 3);
            assert_eq!(gen_cost, 2 * bits as u64 * 3);
            s.window_advance(epoch, &new, &[]).unwrap();
            assert_eq!(s.server_window(Party::Zero).stored_keys(), (keys0 + 3).min(14 * 3));
        }
    }
}
