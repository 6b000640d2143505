"""Generate the WGS84 -> UTM reference table used by the projection tests.

Uses PROJ (via pyproj) as the independent reference implementation. The output
is committed; rerun only to regenerate.

    python3 tests/oracles/gen_utm_oracle.py > tests/data/utm_oracle.csv
"""
import random

from pyproj import Transformer

random.seed(20240601)

points = [
    # (lat, lon, zone, south)
    (45.0, 10.0, 32, False),     # zone 32 central meridian is 9E; +1 deg
    (0.0, 9.0, 32, False),
    (0.0, 9.0, 32, True),
    (52.2297, 21.0122, 34, False),
    (-33.8688, 151.2093, 56, True),
    (64.1466, -21.9426, 27, False),
    (-54.8019, -68.3030, 19, True),
    (83.5, 3.0, 31, False),
    (-79.9, -177.0, 1, True),
    (37.7749, -122.4194, 10, False),
    (1.0e-6, 33.0, 36, False),
]
while len(points) < 20:
    zone = random.randint(1, 60)
    south = random.random() < 0.5
    lat = random.uniform(0.0, 84.0) * (-1.0 if south else 1.0)
    cm = -183.0 + 6.0 * zone
    lon = cm + random.uniform(-3.5, 3.5)
    if lon > 180.0:
        lon -= 360.0
    if lon < -180.0:
        lon += 360.0
    points.append((lat, lon, zone, south))

print("lat,lon,zone,hemisphere,easting,northing")
for lat, lon, zone, south in points:
    crs = f"+proj=utm +zone={zone} +ellps=WGS84 +units=m" + (" +south" if south else "")
    t = Transformer.from_crs("EPSG:4326", crs, always_xy=True)
    e, n = t.transform(lon, lat)
    print(f"{lat:.10f},{lon:.10f},{zone},{'S' if south else 'N'},{e:.6f},{n:.6f}")
