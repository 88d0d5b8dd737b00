//! Property tests for the transport invariants: per-(source, context) FIFO,
//! context isolation, and send/receive/pending conservation.

use proptest::prelude::*;
use rbc::{BaseRank, ContextId, Envelope, Fabric, SrcFilter};

fn ctx_for(choice: u8) -> ContextId {
    ContextId::new(0, 0, 0, 7, choice as u32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fifo_per_source_context_and_isolation(
        ops in proptest::collection::vec((0usize..4, 0u8..3), 1..120)
    ) {
        let fabric = Fabric::new(8).unwrap();
        let dst = BaseRank(7);
        let mut seq = [[0u64; 3]; 4];
        for &(src, ctx_choice) in &ops {
            let n = seq[src][ctx_choice as usize];
            seq[src][ctx_choice as usize] += 1;
            fabric.send(Envelope {
                ctx: ctx_for(ctx_choice),
                tag: 5,
                src: BaseRank(src),
                dst,
                payload: n.to_le_bytes().to_vec(),
            }).unwrap();
        }
        prop_assert_eq!(fabric.counters().messages_sent, ops.len() as u64);

        let ep = fabric.endpoint(7).unwrap();
        for src in 0..4 {
            for ctx_choice in 0u8..3 {
                let ctx = ctx_for(ctx_choice);
                let mut expected = 0u64;
                while let Some(env) = ep.raw_recv(ctx, 5, BaseRank(src)) {
                    let got = u64::from_le_bytes(env.payload.try_into().unwrap());
                    // Receive order equals send order within (src, ctx)...
                    prop_assert_eq!(got, expected);
                    expected += 1;
                }
                // ...and nothing from other contexts leaked in.
                prop_assert_eq!(expected, seq[src][ctx_choice as usize]);
            }
        }
        let t = fabric.counters();
        prop_assert_eq!(t.messages_received, t.messages_sent);
        prop_assert_eq!(t.pending(), 0);
    }

    #[test]
    fn probe_never_crosses_contexts(
        sends in proptest::collection::vec((0u8..3, 1usize..20), 1..40)
    ) {
        let fabric = Fabric::new(2).unwrap();
        let mut per_ctx = [0usize; 3];
        for &(ctx_choice, len) in &sends {
            per_ctx[ctx_choice as usize] += 1;
            fabric.send(Envelope {
                ctx: ctx_for(ctx_choice),
                tag: 1,
                src: BaseRank(0),
                dst: BaseRank(1),
                payload: vec![ctx_choice; len],
            }).unwrap();
        }
        let ep = fabric.endpoint(1).unwrap();
        for ctx_choice in 0u8..3 {
            match ep.raw_probe(ctx_for(ctx_choice), 1, SrcFilter::Any) {
                Some(h) => {
                    prop_assert!(per_ctx[ctx_choice as usize] > 0);
                    prop_assert_eq!(h.src, BaseRank(0));
                }
                None => prop_assert_eq!(per_ctx[ctx_choice as usize], 0),
            }
        }
    }
}
