"""Naive scalar day loop used as an oracle for the vectorized simulator.

Plain Python floats and lists only. Each quantity is written straight from
its scalar definition, one (product, retailer) pair at a time.
"""
from __future__ import annotations


def reference_run(price, stockcost, pdelay, trucksize, rdelay, basestock, demand, T, decide,
                  preseed=None):
    """Simulate ``T`` days.

    ``demand[t][k][i]`` and ``basestock[k][i]`` are nested lists.
    ``decide(t, position)`` returns one order per product, placed ahead of day
    ``t``. ``preseed[k]`` lists orders already in flight, the first arriving on
    day 0. Returns per-day, per-product dicts of the recorded quantities.
    """
    P, R = len(price), len(trucksize)
    w_stock = [0.0] * P
    # pending[k]: undelivered orders, front arrives next
    pending = []
    for k in range(P):
        seed = list(preseed[k]) if preseed is not None else []
        pending.append(seed + [0.0] * (pdelay[k] - 1 - len(seed)))
    r_stock = [[basestock[k][i] for i in range(R)] for k in range(P)]
    # transit[k][i]: shipments on the road, front arrives next
    transit = [[[0.0] * rdelay[i] for i in range(R)] for k in range(P)]

    rows = []
    for t in range(T):
        position = [w_stock[k] + sum(pending[k]) for k in range(P)]
        orders = [float(o) for o in decide(t, position)]
        arrival = []
        for k in range(P):
            pending[k].append(orders[k])
            arrival.append(pending[k].pop(0))

        lack = [[0.0] * R for _ in range(P)]
        for k in range(P):
            for i in range(R):
                got = transit[k][i].pop(0)
                have = r_stock[k][i] + got
                sold = min(demand[t][k][i], have)
                r_stock[k][i] = have - sold
                on_road = sum(transit[k][i])
                lack[k][i] = max(0.0, basestock[k][i] - r_stock[k][i] - on_road)

        request = [[0.0] * R for _ in range(P)]
        for i in range(R):
            want = sum(lack[k][i] for k in range(P))
            if want >= trucksize[i]:
                for k in range(P):
                    request[k][i] = (trucksize[i] / want) * lack[k][i]

        day = []
        for k in range(P):
            have = w_stock[k] + arrival[k]
            total = sum(request[k])
            if total > 0:
                ratio = min(1.0, have / total)
            else:
                ratio = 1.0
            ship = [ratio * request[k][i] for i in range(R)]
            shipped = sum(ship)
            w_stock[k] = have - total if have >= total else 0.0
            profit = price[k] * shipped
            cost = stockcost[k] * w_stock[k]
            for i in range(R):
                transit[k][i].append(ship[i])
            day.append({"order": orders[k], "arrival": arrival[k], "request_total": total,
                        "ship_total": shipped, "stock": w_stock[k], "profit": profit,
                        "inventory_cost": cost, "gain": profit - cost,
                        "request": list(request[k]), "ship": ship})
        rows.append(day)
    return rows
