from qmetric.cli import main

raise SystemExit(main())
