//! Drives the receive window by hand: a gap holds later PDUs until the
//! missing one arrives or t-Reordering expires.

use mcsim::pdcp::{PdcpPdu, ReorderConfig, ReorderState, RxOutcome, SnLen};
use mcsim::sim::{SimTime, TimerCommand};

fn pdu(count: u64) -> PdcpPdu {
    PdcpPdu {
        count,
        sn: SnLen::default().sn_of(count),
        sdu_id: count,
        size_bytes: 1400,
        created_at: SimTime::ZERO,
        path: None,
    }
}

fn show(at: SimTime, what: &str, rx: &ReorderState, out: &RxOutcome) {
    let got: Vec<u64> = out.delivered.iter().map(|d| d.count).collect();
    let timer = match out.timer {
        TimerCommand::Start(t) => format!("start {} ms", t.as_millis_f64()),
        TimerCommand::Stop => "stop".into(),
        TimerCommand::Keep => String::new(),
    };
    println!(
        "{:>4} ms {what:<12} deliver {got:?} lost {:?} | deliv {} next {} buffered {:?} {timer}",
        at.as_millis_f64(),
        out.declared_lost,
        rx.rx_deliv(),
        rx.rx_next(),
        rx.buffered_counts().collect::<Vec<_>>(),
    );
}

fn main() {
    let mut rx = ReorderState::new(ReorderConfig::enabled(SnLen::default(), SimTime::from_millis(40)));
    let ms = SimTime::from_millis;

    for (t, c) in [(0, 0), (1, 2), (2, 3), (12, 1), (13, 5), (14, 6)] {
        let out = rx.receive(&pdu(c), ms(t));
        show(ms(t), &format!("recv {c}"), &rx, &out);
    }
    // COUNT 4 never shows up
    let deadline = rx.timer_deadline().expect("timer armed for the gap at 4");
    let out = rx.on_t_reordering_expiry(deadline);
    show(deadline, "expiry", &rx, &out);

    let out = rx.receive(&pdu(4), ms(60));
    show(ms(60), "late 4", &rx, &out);
    println!("{:?}", rx.stats());
}
