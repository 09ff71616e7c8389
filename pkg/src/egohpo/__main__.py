from egohpo.cli import main

raise SystemExit(main())
