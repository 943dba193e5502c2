"""Synthetic track files shared by the ingest, CLI and acceptance tests."""

THREE_TRACKS = """id,timestamp,x,y
a,0,0.0,0.0
a,10,1.0,0.0
a,20,2.0,0.5
a,30,2.5,1.0
b,0,5.0,5.0
b,10,5.5,5.0
b,20,6.0,5.5
b,120,7.0,6.0
b,130,7.5,6.0
b,140,8.0,6.5
c,3,-1.0,-1.0
c,12,-1.5,-1.0
c,21,-2.0,-1.5
"""
# track b has a 100 s gap (10 t at t = 10): it splits into two paths.
# effective period: a 30, b 20 + 20, c 20 (fixes at 3, 12, 21 snap to 0, 10, 20)
THREE_TRACKS_T = 10.0
THREE_TRACKS_EFFECTIVE = 90.0
THREE_TRACKS_RAW_SPAN = 30.0 + 140.0 + 18.0


# constant C of the high-frequency acceptance radius C ln(T/t) sqrt(t), frozen from
# one calibration run (seed 100, T = 50, t = 1e-4, frozen default constants): the
# largest flagged-point distance was 0.854 and the first hit lay 1.937 from the
# nearest flagged point, with ln(T/t) sqrt(t) = 0.1312, so C = 1.937 / 0.1312.
ALG3_C = 14.8
