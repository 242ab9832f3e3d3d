//! The scheduler on its own: ties fire in scheduling order, cancelled
//! events never fire, and handlers may schedule more work.

use mcsim::sim::{Scheduler, SimTime};

#[derive(Debug)]
enum Ev {
    Ping(u32),
    Timeout,
}

fn main() {
    let mut sched = Scheduler::new();
    sched.schedule(SimTime::from_millis(5), Ev::Ping(1)).unwrap();
    sched.schedule(SimTime::from_millis(5), Ev::Ping(2)).unwrap();
    let timer = sched.schedule(SimTime::from_millis(3), Ev::Timeout).unwrap();
    sched.cancel(timer);

    let summary = sched.run_until(SimTime::from_millis(50), |s, ev| {
        println!("{:>8} us  #{:<2} {:?}", ev.fire_at.as_micros(), ev.seq, ev.payload);
        if let Ev::Ping(n) = ev.payload {
            if n < 6 {
                s.schedule_in(SimTime::from_millis(10), Ev::Ping(n + 2));
            }
        }
    });
    println!("{summary:?}");
    println!("{:?}", sched.counters());
}
