"""
Single fog station against queueing theory
==========================================

One FIFO server fed by Poisson arrivals. With exponential service the mean
wait in queue is rho / (mu (1 - rho)); with constant service it is half that.
"""

from fogmarl.engine import single_station_waits

lam, mean_service = 0.5, 1.0
rho = lam * mean_service

# exponential service
w = single_station_waits(lam, mean_service, 100_000, seed=0)
print(f"M/M/1  simulated {w.mean():.4f}   theory {rho * mean_service / (1 - rho):.4f}")

# same arrivals, constant service
w = single_station_waits(lam, mean_service, 100_000, seed=0, stochastic=False)
print(f"M/D/1  simulated {w.mean():.4f}   theory {rho * mean_service / (2 * (1 - rho)):.4f}")

# the load curve: waits blow up as rho -> 1
for lam in (0.2, 0.5, 0.8, 0.9):
    w = single_station_waits(lam, 1.0, 50_000, seed=1)
    print(f"  rho={lam:.1f}  wait {w.mean():7.3f}  theory {lam / (1 - lam):7.3f}")
