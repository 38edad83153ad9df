use std::net::Ipv4Addr;
use std::time::Duration;

use flowsplit_splitter::{FiveTuple, FlowClass, FlowTable, Ipv4Header, SplitterConfig, PROTO_TCP};
use proptest::prelude::*;

fn header(src: u32, protocol: u8) -> Ipv4Header {
    Ipv4Header::new(Ipv4Addr::from(src), Ipv4Addr::new(10, 1, 0, 1), protocol, 1500, 0)
}

proptest! {
    #[test]
    fn classes_are_monotone_and_counts_exact(threshold in 1u64..100, n in 1u64..300) {
        let mut table = FlowTable::new(SplitterConfig::with_threshold(threshold));
        let h = header(0x0a00_0001, PROTO_TCP);
        let mut seen_long = false;
        for i in 1..=n {
            let (class, out) = table.process_packet(h, 1024, 443, Duration::from_micros(i)).unwrap();
            prop_assert!(out.checksum_valid());
            if seen_long {
                prop_assert_eq!(class, FlowClass::Long);
            }
            seen_long |= class == FlowClass::Long;
            prop_assert_eq!(class == FlowClass::Long, i >= threshold);
        }
        let tuple = FiveTuple::from_header(&h, 1024, 443);
        prop_assert_eq!(table.get(&tuple).unwrap().pkt_count, n);
    }

    #[test]
    fn non_tcp_is_transparent(protocol in any::<u8>().prop_filter("tcp", |p| *p != PROTO_TCP),
                              tos in any::<u8>(), src in any::<u32>()) {
        let mut table = FlowTable::new(SplitterConfig::with_threshold(1));
        let mut h = header(src, protocol);
        h.tos = tos;
        h.header_checksum = h.computed_checksum();
        let (class, out) = table.process_packet(h, 1, 2, Duration::ZERO).unwrap();
        prop_assert_eq!(class, FlowClass::Short);
        prop_assert_eq!(out.to_bytes(), h.to_bytes());
        prop_assert!(table.is_empty());
    }

    #[test]
    fn eviction_restarts_classification(threshold in 1u64..20, n in 1u64..60, idle_extra in 1u64..1_000_000) {
        let config = SplitterConfig::with_threshold(threshold);
        let mut table = FlowTable::new(config);
        let h = header(0x0a00_0002, PROTO_TCP);
        for i in 0..n {
            table.process_packet(h, 5, 6, Duration::from_micros(i)).unwrap();
        }
        let last = Duration::from_micros(n - 1);
        let now = last + config.idle_timeout + Duration::from_micros(idle_extra);
        prop_assert_eq!(table.evict_idle(now), 1);
        let (class, _) = table.process_packet(h, 5, 6, now).unwrap();
        prop_assert_eq!(class == FlowClass::Short, threshold > 1);
        prop_assert_eq!(table.get(&FiveTuple::from_header(&h, 5, 6)).unwrap().pkt_count, 1);
    }

    #[test]
    fn eviction_leaves_nothing_stale(times in proptest::collection::vec((0u16..64, 0u64..120_000_000), 1..200),
                                     now in 0u64..200_000_000) {
        let mut table = FlowTable::default();
        let mut sorted = times.clone();
        sorted.sort_by_key(|(_, t)| *t);
        for (port, t) in &sorted {
            table.process_packet(header(1, PROTO_TCP), *port, 80, Duration::from_micros(*t)).unwrap();
        }
        let now = Duration::from_micros(now.max(sorted.last().unwrap().1));
        let before = table.len();
        let evicted = table.evict_idle(now);
        prop_assert_eq!(before - evicted, table.len());
        for (_, rec) in table.iter() {
            prop_assert!(now - rec.last_seen <= table.config().idle_timeout);
            prop_assert!(rec.pkt_count >= 1);
        }
    }

    #[test]
    fn identical_sequences_give_identical_tables(ports in proptest::collection::vec(0u16..8, 1..100)) {
        let run = || {
            let mut table = FlowTable::new(SplitterConfig::with_threshold(4));
            let out: Vec<_> = ports.iter().enumerate().map(|(i, p)| {
                table.process_packet(header(3, PROTO_TCP), *p, 80, Duration::from_micros(i as u64)).unwrap()
            }).collect();
            let mut state: Vec<_> = table.iter().map(|(k, v)| (*k, *v)).collect();
            state.sort_by_key(|(k, _)| *k);
            (out, state)
        };
        prop_assert_eq!(run(), run());
    }
}
