import math
import random
from pathlib import Path

import pytest

from vrframe.formula import FormulaTypeError, UnknownNameError
from vrframe.stars import (
    CANONICAL, CatalogError, ColumnMap, StarConfig, StarError, StarRecord, export_csv,
    filter_records, load_catalog, magnitudes, read_catalog, temperature, to_direction, visual,
)

FIXTURE = Path(__file__).parent / "fixtures" / "stars10.csv"
FIXTURE_MAP = ColumnMap(ra="ra_deg", dec="dec_deg", parallax="plx_mas", bt="bt_mag", vt="vt_mag")


def fixture():
    return load_catalog(FIXTURE, FIXTURE_MAP)


def test_single_row_record():
    recs, skipped = read_catalog("id,ra,dec,parallax,bt,vt\na,0,0,100,,1.0\n")
    assert skipped == []
    assert recs == [StarRecord("a", 0.0, 0.0, 100.0, None, 1.0)]


def test_out_of_range_row_skipped():
    recs, skipped = read_catalog("id,ra,dec,parallax,bt,vt\na,0,95,1,2,2\nb,10,5,1,2,2\n")
    assert [r.id for r in recs] == ["b"]
    assert skipped[0][0] == 2 and "dec" in skipped[0][1]


def test_mixed_optional_magnitudes():
    recs, skipped = read_catalog(
        "id,ra,dec,parallax,bt,vt\n"
        "a,10,20,5,3.1,\n"
        "b,20,-10,,,4.2\n"
        "c,30,0,2,5.5,5.0\n"
    )
    assert not skipped
    assert [(r.bt, r.vt) for r in recs] == [(3.1, None), (None, 4.2), (5.5, 5.0)]
    assert recs[1].parallax == 0.0
    assert recs[0].ra == math.radians(10)


def test_unusable_rows_and_missing_columns():
    recs, skipped = read_catalog("id,ra,dec,parallax,bt,vt\na,1,1,1,,\nb,x,1,1,1,1\nc,1,1,-3,1,1\n")
    assert recs == [] and len(skipped) == 3
    with pytest.raises(CatalogError):
        read_catalog("id,ra,dec\na,1,2\n")
    with pytest.raises(CatalogError):
        load_catalog(FIXTURE.parent / "missing.csv")


def test_radian_columns():
    recs, _ = read_catalog("id,ra,dec,parallax,vt\na,3.0,-1.5,1,2\n", ColumnMap(bt=None, angle_unit="rad"))
    assert (recs[0].ra, recs[0].dec) == (3.0, -1.5)


def test_column_map_parsing():
    assert ColumnMap.parse("ra=ra_deg, dec=dec_deg,angle_unit=rad") == ColumnMap(ra="ra_deg", dec="dec_deg", angle_unit="rad")
    with pytest.raises(StarError):
        ColumnMap.parse("bogus=1")


# -- filter -------------------------------------------------------------------

def test_filter_counts_match_independent_scan():
    recs, skipped = fixture()
    assert len(recs) + len(skipped) == 10 and len(skipped) == 1
    for limit in (3, 6):
        expected = []
        for r in recs:
            if r.bt is not None and r.vt is not None:
                v = r.vt - 0.090 * (r.bt - r.vt)
            else:
                v = r.vt if r.vt is not None else r.bt
            if v < limit:
                expected.append(r.id)
        assert [r.id for r in filter_records(recs, f"v_mag < {limit}")] == expected
    assert len(filter_records(recs, "v_mag < 3")) == 4


def test_filter_tautology_and_subset_order():
    recs, _ = fixture()
    assert filter_records(recs, "1 > 0") == recs
    kept = filter_records(recs, "dec > 0 && parallax >= 2")
    assert kept == [r for r in recs if r.dec > 0 and r.parallax >= 2]


def test_filter_excludes_records_missing_referenced_field():
    recs, _ = fixture()
    kept = filter_records(recs, "bt > 0")
    assert all(r.bt is not None for r in kept)
    assert len(kept) == sum(r.bt is not None for r in recs)


def test_filter_type_errors():
    recs, _ = fixture()
    with pytest.raises(FormulaTypeError):
        filter_records(recs, "ra + dec")
    with pytest.raises(UnknownNameError):
        filter_records(recs, "mass > 1")


# -- conversion ---------------------------------------------------------------

def test_direction_examples():
    assert to_direction(0, 0) == (1.0, 0.0, 0.0)
    x, y, z = to_direction(math.pi / 2, 0)
    assert abs(x) < 1e-16 and y == 1.0 and z == 0.0
    x, y, z = to_direction(0, math.pi / 2)
    assert abs(x) < 1e-16 and y == 0.0 and z == 1.0


def test_direction_unit_norm():
    rng = random.Random(8)
    for _ in range(100_000):
        v = to_direction(rng.uniform(0, 2 * math.pi), rng.uniform(-math.pi / 2, math.pi / 2))
        assert abs(math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2) - 1) <= 1e-12


def test_visual_examples():
    assert visual(StarRecord("a", 0, 0, 100, None, 3.0)).distance == 10.0
    assert visual(StarRecord("a", 0, 0, 0.1, None, 3.0)).distance is None
    v = visual(StarRecord("a", 0, 0, 1, 1.0, 1.0))
    assert (v.v_mag, v.bv) == (1.0, 0.0)
    v = visual(StarRecord("a", 0, 0, 1, 1.5, 1.0))
    assert v.v_mag == 0.955 and v.bv == 0.425
    # 4600 * (1/2.091 + 1/1.011), computed by hand
    assert v.temperature == pytest.approx(6749.85, abs=0.01)
    assert v.temperature == temperature(0.425)


def test_blackbody_color_trend():
    hot = visual(StarRecord("h", 0, 0, 1, 0.0, 0.4)).color  # B-V < 0
    cool = visual(StarRecord("c", 0, 0, 1, 3.0, 1.5)).color  # B-V > 1
    assert hot[2] > hot[0] and cool[0] > cool[2]


def test_radius_monotone_and_floor():
    cfg = StarConfig(r_min=1.5, k=10.0)
    radii = [visual(StarRecord("s", 0, 0, 1, None, m / 4), cfg).radius_px for m in range(-8, 60)]
    assert all(a >= b for a, b in zip(radii, radii[1:]))
    assert radii[-1] == 1.5 and radii[0] == 10.0 * 10 ** (2 / 5)


def test_color_override_formula():
    cfg = StarConfig(color="[255, 255 * (1 - bv), v_mag]")
    assert visual(StarRecord("a", 0, 0, 1, 1.5, 1.0), cfg).color == (255, 147, 1)


def test_export_round_trip():
    recs, _ = fixture()
    text = export_csv(recs)
    assert text.splitlines()[0] == "id,ra_rad,dec_rad,parallax_mas,bt,vt,v_mag,dist_pc,r,g,b"
    again, skipped = read_catalog(text, CANONICAL)
    assert skipped == [] and again == recs
    assert magnitudes(again[1]) == magnitudes(recs[1])
