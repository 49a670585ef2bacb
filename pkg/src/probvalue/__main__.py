from probvalue.cli import main

raise SystemExit(main())
