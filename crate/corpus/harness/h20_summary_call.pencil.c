void bump_summary(int n, int A[const restrict static n], int k)
{
  USE(A[k]);
  DEF(A[k]);
}

void bump(int n, int A[const restrict static n], int k)
  ACCESS(bump_summary(n, A, k))
{
  A[k] = A[k] + 7;
}

void bump_all(int n, int A[const restrict static n])
{
  for (int i = 0; i < n; i++)
    bump(n, A, i);
}
