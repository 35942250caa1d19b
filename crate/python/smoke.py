"""Smoke test for the dgcvc_py extension module.

Build and run:
    cargo build --release -p dgcvc-py --features extension-module
    python3 python/smoke.py target/release
"""

import os
import sys
import shutil
import tempfile


def load(build_dir):
    for name in ("libdgcvc_py.so", "libdgcvc_py.dylib", "dgcvc_py.dll"):
        lib = os.path.join(build_dir, name)
        if os.path.exists(lib):
            stage = tempfile.mkdtemp()
            ext = ".pyd" if name.endswith(".dll") else ".so"
            shutil.copy(lib, os.path.join(stage, "dgcvc_py" + ext))
            sys.path.insert(0, stage)
            break
    import dgcvc_py

    return dgcvc_py


def main():
    build_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join("target", "release")
    m = load(build_dir)

    a = [[0.0, 1.0, 2.0], [0.5, -1.0, 0.25]]
    assert m.dtw_mcd(a, a) == 0.0
    assert m.dtw_mcd(a, [[0.0, 1.0, 2.5], [0.5, -1.0, 0.25]]) > 0.0
    try:
        m.dtw_mcd(a, [[1.0], [1.0, 2.0]])
    except ValueError as e:
        assert str(e).startswith("shape")
    else:
        raise AssertionError("ragged input accepted")

    with tempfile.TemporaryDirectory() as d:
        speakers = m.synth_toy_corpus(d, 2, 1, 0)
        assert len(speakers) == 2
        wav = os.path.join(d, speakers[0], "utt000.wav")
        mel = m.mel_spectrogram(wav)
        assert len(mel) > 0 and all(len(r) == 80 for r in mel)

        table = os.path.join(d, "e.csv")
        with open(table, "w") as f:
            f.write("id,group,converted,e0,e1\na,x,false,0,0\nb,y,false,1,0\nc,x,true,0.25,0\n")
        assert m.similarity(table) == [("x", 0.25, 0.75)]

    print("python smoke test passed")


if __name__ == "__main__":
    main()
